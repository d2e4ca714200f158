//! Visual features computed from a rendered raster: average colour, centre of
//! mass, distances, single-linkage groups, convex-hull composites and the
//! attentional vector sum (AVS) direction used by spatial relations.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use crate::error::VisionError;
use crate::scene::{neighbours4, Frame, ObjectId, Raster, SceneObject};

/// Composite (group) objects are numbered from here on so they never collide
/// with scene ids.
pub const COMPOSITE_ID_BASE: u32 = 1_000_000;
pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.15;
pub const DEFAULT_AVS_LAMBDA: f64 = 0.7;
const MIN_DISTANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisionConfig {
    /// Single-linkage distance threshold, board units.
    pub group_distance_threshold: f64,
    pub avs_lambda: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            group_distance_threshold: DEFAULT_GROUP_THRESHOLD,
            avs_lambda: DEFAULT_AVS_LAMBDA,
        }
    }
}

/// Reference directions in raster coordinates (y grows toward the viewer).
pub fn reference_vector(name: &str) -> Option<[f64; 2]> {
    match name {
        "left" => Some([-1.0, 0.0]),
        "right" => Some([1.0, 0.0]),
        "behind" | "back" | "above" => Some([0.0, -1.0]),
        "front" | "below" => Some([0.0, 1.0]),
        _ => None,
    }
}

pub const REFERENCE_DIRECTIONS: [&str; 7] = ["left", "right", "behind", "back", "above", "front", "below"];

/// Pixel set of one object (or composite) with its cached statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub pixels: Vec<(u32, u32)>,
    pub boundary: Vec<(u32, u32)>,
    pub mean_rgb: [f64; 3],
    pub centroid: [f64; 2],
}

impl Region {
    fn build(pixels: Vec<(u32, u32)>, raster: &Raster, inside: impl Fn(u32, u32) -> bool) -> Region {
        let n = pixels.len() as f64;
        let mut rgb = [0.0f64; 3];
        let mut c = [0.0f64; 2];
        let mut boundary = Vec::new();
        for &(x, y) in &pixels {
            let p = raster.rgb[raster.index(x, y)];
            for k in 0..3 {
                rgb[k] += f64::from(p[k]);
            }
            c[0] += f64::from(x);
            c[1] += f64::from(y);
            let edge = neighbours4(x, y, raster.width, raster.height)
                .into_iter()
                .any(|nb| nb.is_none_or(|(nx, ny)| !inside(nx, ny)));
            if edge {
                boundary.push((x, y));
            }
        }
        Region {
            pixels,
            boundary,
            mean_rgb: rgb.map(|v| v / n),
            centroid: c.map(|v| v / n),
        }
    }
}

/// Regions of every object drawn in a frame.
#[derive(Debug, Default)]
pub struct FrameFeatures {
    regions: BTreeMap<ObjectId, Arc<Region>>,
}

impl FrameFeatures {
    pub fn extract(raster: &Raster) -> Self {
        let mut pixels: BTreeMap<ObjectId, Vec<(u32, u32)>> = BTreeMap::new();
        for y in 0..raster.height {
            for x in 0..raster.width {
                if let Some(id) = raster.owner(x, y) {
                    pixels.entry(id).or_default().push((x, y));
                }
            }
        }
        let regions = pixels
            .into_iter()
            .map(|(id, px)| {
                let region = Region::build(px, raster, |x, y| raster.owner(x, y) == Some(id));
                (id, Arc::new(region))
            })
            .collect();
        FrameFeatures { regions }
    }

    pub fn region(&self, id: ObjectId) -> Option<&Arc<Region>> {
        self.regions.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.regions.keys().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Group {
    pub members: Vec<ObjectId>,
    /// Mean pairwise centroid distance, board units.
    pub cohesion: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupSet {
    pub groups: Vec<Group>,
}

#[derive(Debug, Default)]
struct CompositeRegistry {
    by_members: BTreeMap<Vec<ObjectId>, ObjectId>,
    objects: BTreeMap<ObjectId, (SceneObject, Arc<Region>)>,
}

/// Feature access for one frame. Composites created while interpreting an
/// utterance live here, so a context should not outlive its resolution.
#[derive(Debug)]
pub struct VisionContext<'a> {
    frame: &'a Frame,
    pub config: VisionConfig,
    composites: Mutex<CompositeRegistry>,
}

impl<'a> VisionContext<'a> {
    pub fn new(frame: &'a Frame, config: VisionConfig) -> Self {
        VisionContext {
            frame,
            config,
            composites: Mutex::new(CompositeRegistry::default()),
        }
    }

    pub fn frame(&self) -> &'a Frame {
        self.frame
    }

    pub fn raster(&self) -> &'a Raster {
        &self.frame.raster
    }

    /// Scene objects that own at least one pixel.
    pub fn visible_ids(&self) -> Vec<ObjectId> {
        self.frame.features().ids().collect()
    }

    pub fn region(&self, id: ObjectId) -> Result<Arc<Region>, VisionError> {
        if let Some(r) = self.frame.features().region(id) {
            return Ok(Arc::clone(r));
        }
        let reg = self.composites.lock().expect("composite registry poisoned");
        reg.objects
            .get(&id)
            .map(|(_, r)| Arc::clone(r))
            .ok_or(VisionError::EmptyRegion(id))
    }

    pub fn composite(&self, id: ObjectId) -> Option<SceneObject> {
        let reg = self.composites.lock().expect("composite registry poisoned");
        reg.objects.get(&id).map(|(o, _)| o.clone())
    }

    /// Base ids an object stands for: its members if composite, else itself.
    pub fn members(&self, id: ObjectId) -> Vec<ObjectId> {
        self.composite(id).map_or_else(|| vec![id], |o| o.members)
    }

    pub fn average_rgb(&self, id: ObjectId) -> Result<[f64; 3], VisionError> {
        Ok(self.region(id)?.mean_rgb)
    }

    /// Centre of mass in pixel coordinates.
    pub fn centroid(&self, id: ObjectId) -> Result<[f64; 2], VisionError> {
        Ok(self.region(id)?.centroid)
    }

    /// Euclidean distance between centres of mass, in pixels.
    pub fn distance(&self, a: ObjectId, b: ObjectId) -> Result<f64, VisionError> {
        let (ca, cb) = (self.centroid(a)?, self.centroid(b)?);
        Ok(((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt())
    }

    pub fn distance_board(&self, a: ObjectId, b: ObjectId) -> Result<f64, VisionError> {
        Ok(self.distance(a, b)? / f64::from(self.frame.raster.width))
    }

    /// Single-linkage components of `candidates` under the group threshold.
    /// Objects without pixels are ignored. With `count`, only components of
    /// exactly that size are returned.
    pub fn find_groups(&self, candidates: &[ObjectId], count: Option<usize>) -> GroupSet {
        let mut ids: Vec<ObjectId> = candidates
            .iter()
            .copied()
            .filter(|id| self.region(*id).is_ok())
            .collect();
        ids.sort();
        ids.dedup();
        let n = ids.len();
        let mut dsu = DisjointSet::new(n);
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = self.distance_board(ids[i], ids[j]).expect("regions checked above");
                dist[i * n + j] = d;
                dist[j * n + i] = d;
                if d < self.config.group_distance_threshold {
                    dsu.union(i, j);
                }
            }
        }
        let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            components.entry(dsu.find(i)).or_default().push(i);
        }
        let mut groups: Vec<Group> = components
            .into_values()
            .filter(|c| c.len() >= 2 && count.is_none_or(|k| c.len() == k))
            .map(|c| {
                let mut total = 0.0;
                let mut pairs = 0usize;
                for (a, &i) in c.iter().enumerate() {
                    for &j in &c[a + 1..] {
                        total += dist[i * n + j];
                        pairs += 1;
                    }
                }
                Group {
                    members: c.iter().map(|&i| ids[i]).collect(),
                    cohesion: total / pairs as f64,
                }
            })
            .collect();
        groups.sort_by(|a, b| a.members.cmp(&b.members));
        GroupSet { groups }
    }

    /// Registers (or reuses) a composite whose shape is the filled convex hull
    /// of all member pixels.
    pub fn make_composite(&self, members: &[ObjectId]) -> Result<SceneObject, VisionError> {
        let mut key: Vec<ObjectId> = members.to_vec();
        key.sort();
        key.dedup();
        if key.len() < 2 {
            return Err(VisionError::TooFewMembers(key.len()));
        }
        let known = self
            .composites
            .lock()
            .expect("composite registry poisoned")
            .by_members
            .get(&key)
            .copied();
        if let Some(id) = known {
            return Ok(self.composite(id).expect("registered composite"));
        }
        let mut member_pixels: HashSet<(u32, u32)> = HashSet::new();
        for &m in &key {
            let region = self.frame.features().region(m).ok_or(VisionError::EmptyRegion(m))?;
            member_pixels.extend(region.pixels.iter().copied());
        }
        let points: Vec<(i64, i64)> = member_pixels
            .iter()
            .map(|&(x, y)| (i64::from(x), i64::from(y)))
            .collect();
        let hull = convex_hull(&points);
        let mut filled: HashSet<(u32, u32)> = fill_convex(&hull).into_iter().collect();
        filled.extend(member_pixels);
        let mut pixels: Vec<(u32, u32)> = filled.iter().copied().collect();
        pixels.sort_by_key(|&(x, y)| (y, x));
        let raster = self.raster();
        let region = Region::build(pixels, raster, |x, y| filled.contains(&(x, y)));

        let mut reg = self.composites.lock().expect("composite registry poisoned");
        let id = ObjectId(COMPOSITE_ID_BASE + reg.objects.len() as u32);
        let w = f64::from(raster.width);
        let h = f64::from(raster.height);
        let obj = SceneObject {
            id,
            x: region.centroid[0] / w,
            y: region.centroid[1] / h,
            colour: self
                .frame
                .scene
                .get(key[0])
                .map_or(crate::scene::ColourClass::Green, |o| o.colour),
            is_composite: true,
            members: key.clone(),
        };
        reg.by_members.insert(key, id);
        reg.objects.insert(id, (obj.clone(), Arc::new(region)));
        Ok(obj)
    }

    pub fn avs_direction(&self, trajector: ObjectId, landmark: ObjectId) -> Result<[f64; 2], VisionError> {
        self.avs_direction_with(trajector, landmark, self.config.avs_lambda)
    }

    /// Unit vector `normalize(λ·centre_dir + (1−λ)·proximal_dir)` from the
    /// landmark toward the trajector.
    pub fn avs_direction_with(
        &self,
        trajector: ObjectId,
        landmark: ObjectId,
        lambda: f64,
    ) -> Result<[f64; 2], VisionError> {
        let (rt, rl) = (self.region(trajector)?, self.region(landmark)?);
        let undefined = VisionError::UndefinedDirection(trajector, landmark);
        let centre = unit([rt.centroid[0] - rl.centroid[0], rt.centroid[1] - rl.centroid[1]]);
        let (pl, pt) = closest_pair(&rl.boundary, &rt.boundary);
        let proximal = unit([pt.0 as f64 - pl.0 as f64, pt.1 as f64 - pl.1 as f64]);
        let (c, p) = match (centre, proximal) {
            (Some(c), Some(p)) => (c, p),
            (Some(c), None) => (c, c),
            (None, Some(p)) => (p, p),
            (None, None) => return Err(undefined),
        };
        unit([
            lambda * c[0] + (1.0 - lambda) * p[0],
            lambda * c[1] + (1.0 - lambda) * p[1],
        ])
        .ok_or(undefined)
    }

    /// Angular fit to the named direction divided by centre distance (board
    /// units); fit falls linearly from 1 at 0° to 0 at 90°.
    pub fn spatial_score(&self, trajector: ObjectId, landmark: ObjectId, direction: &str) -> Result<f64, VisionError> {
        let reference =
            reference_vector(direction).ok_or_else(|| VisionError::UnknownDirection(direction.to_string()))?;
        let dir = self.avs_direction(trajector, landmark)?;
        let cos = (dir[0] * reference[0] + dir[1] * reference[1]).clamp(-1.0, 1.0);
        let align = (1.0 - cos.acos() / std::f64::consts::FRAC_PI_2).max(0.0);
        Ok(align / self.distance_board(trajector, landmark)?.max(MIN_DISTANCE))
    }

    /// Debug dump: `id,r,g,b,cx,cy` per visible object.
    pub fn features_csv(&self) -> String {
        let mut out = String::from("id,r,g,b,cx,cy\n");
        for id in self.visible_ids() {
            let r = self.region(id).expect("visible");
            let _ = writeln!(
                out,
                "{},{:.3},{:.3},{:.3},{:.3},{:.3}",
                id, r.mean_rgb[0], r.mean_rgb[1], r.mean_rgb[2], r.centroid[0], r.centroid[1]
            );
        }
        out
    }
}

fn unit(v: [f64; 2]) -> Option<[f64; 2]> {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    (n > 1e-12).then(|| [v[0] / n, v[1] / n])
}

/// Exact closest pair between two boundary sets; first minimum in scan order.
fn closest_pair(from: &[(u32, u32)], to: &[(u32, u32)]) -> ((u32, u32), (u32, u32)) {
    let mut best = (from[0], to[0]);
    let mut best_d = u64::MAX;
    for &a in from {
        for &b in to {
            let dx = i64::from(a.0) - i64::from(b.0);
            let dy = i64::from(a.1) - i64::from(b.1);
            let d = (dx * dx + dy * dy) as u64;
            if d < best_d {
                best_d = d;
                best = (a, b);
            }
        }
    }
    best
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; counter-clockwise in a y-up frame, collinear
/// points dropped. Collinear input yields its two endpoints.
pub fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut pts = points.to_vec();
    pts.sort();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Integer pixels inside or on a convex polygon (or on a segment).
fn fill_convex(hull: &[(i64, i64)]) -> Vec<(u32, u32)> {
    if hull.is_empty() {
        return Vec::new();
    }
    let (min_x, max_x) = (
        hull.iter().map(|p| p.0).min().unwrap(),
        hull.iter().map(|p| p.0).max().unwrap(),
    );
    let (min_y, max_y) = (
        hull.iter().map(|p| p.1).min().unwrap(),
        hull.iter().map(|p| p.1).max().unwrap(),
    );
    let mut out = Vec::new();
    for y in min_y..=max_y {
        for x in min_x..=max_x {
            let p = (x, y);
            let inside = (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= 0);
            if inside {
                out.push((x as u32, y as u32));
            }
        }
    }
    out
}

//! Scene generation, rasterisation and the one-step removal history.
//!
//! A scene is a set of cones on a unit board. Rendering maps the board onto a
//! square raster (y grows downward, so larger y is "front") and records which
//! object owns every pixel. Scenes are immutable; removal returns a new
//! [`SceneState`] that remembers the frame it replaced.

use std::fmt;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SceneError;
use crate::par::mix_seed;
use crate::vision::FrameFeatures;

pub const SCENE_FORMAT: &str = "bishop-scene v1";
pub const RASTER_SIZE: u32 = 512;
pub const MAX_OBJECTS: usize = 30;

/// Minimum distance between cone centres, in board units.
pub const MIN_SEPARATION: f64 = 0.04;
pub const PLACEMENT_RETRIES: usize = 200;
const BOARD_MARGIN: f64 = 0.05;
const CONE_WIDTH: f64 = 0.03;
const CONE_HEIGHT: f64 = 0.045;
const SHADE_SPAN: f64 = 0.12;
const PIXEL_NOISE: u64 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColourClass {
    Green,
    Purple,
}

impl ColourClass {
    pub fn base_rgb(self) -> [f64; 3] {
        match self {
            ColourClass::Green => [60.0, 170.0, 70.0],
            ColourClass::Purple => [140.0, 60.0, 160.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ColourClass::Green => "green",
            ColourClass::Purple => "purple",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: ObjectId,
    /// Board position in `[0, 1]²`; the centre of the cone's footprint box.
    pub x: f64,
    pub y: f64,
    pub colour: ColourClass,
    pub is_composite: bool,
    pub members: Vec<ObjectId>,
}

impl SceneObject {
    pub fn cone(id: u32, x: f64, y: f64, colour: ColourClass) -> Self {
        SceneObject {
            id: ObjectId(id),
            x,
            y,
            colour,
            is_composite: false,
            members: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<SceneObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub colour: ColourClass,
}

/// On-disk scene ("bishop-scene v1"). Rasters are never serialised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub format: String,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectRecord>,
}

impl Scene {
    pub fn new(seed: u64, objects: Vec<SceneObject>) -> Self {
        Scene {
            seed,
            width: RASTER_SIZE,
            height: RASTER_SIZE,
            objects,
        }
    }

    pub fn get(&self, id: ObjectId) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.get(id).is_some()
    }

    pub fn ids(&self) -> Vec<ObjectId> {
        self.objects.iter().map(|o| o.id).collect()
    }

    pub fn to_document(&self) -> SceneDocument {
        SceneDocument {
            format: SCENE_FORMAT.to_string(),
            seed: self.seed,
            width: self.width,
            height: self.height,
            objects: self
                .objects
                .iter()
                .filter(|o| !o.is_composite)
                .map(|o| ObjectRecord {
                    id: o.id.0,
                    x: o.x,
                    y: o.y,
                    colour: o.colour,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &SceneDocument) -> Result<Self, SceneError> {
        if doc.format != SCENE_FORMAT {
            return Err(SceneError::Document(format!("unsupported format {:?}", doc.format)));
        }
        if doc.width == 0 || doc.height == 0 {
            return Err(SceneError::Document("raster size must be positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut objects = Vec::with_capacity(doc.objects.len());
        for rec in &doc.objects {
            if !seen.insert(rec.id) {
                return Err(SceneError::Document(format!("duplicate object id {}", rec.id)));
            }
            if !(0.0..=1.0).contains(&rec.x) || !(0.0..=1.0).contains(&rec.y) {
                return Err(SceneError::Document(format!(
                    "object {} lies off the board at ({}, {})",
                    rec.id, rec.x, rec.y
                )));
            }
            objects.push(SceneObject::cone(rec.id, rec.x, rec.y, rec.colour));
        }
        Ok(Scene {
            seed: doc.seed,
            width: doc.width,
            height: doc.height,
            objects,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_document()).expect("scene serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let doc: SceneDocument = serde_json::from_str(text)?;
        Scene::from_document(&doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        Scene::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Per-pixel colour and owner map.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[u8; 3]>,
    pub owners: Vec<Option<ObjectId>>,
}

impl Raster {
    pub fn blank(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Raster {
            width,
            height,
            rgb: vec![BACKGROUND_RGB; n],
            owners: vec![None; n],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    pub fn owner(&self, x: u32, y: u32) -> Option<ObjectId> {
        self.owners[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3], owner: Option<ObjectId>) {
        let i = self.index(x, y);
        self.rgb[i] = rgb;
        self.owners[i] = owner;
    }

    pub fn pixel_count(&self, id: ObjectId) -> usize {
        self.owners.iter().filter(|o| **o == Some(id)).count()
    }

    /// RGB image with the given object outlined in white.
    pub fn to_image(&self, highlight: Option<ObjectId>) -> image::RgbImage {
        let mut img = image::RgbImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                img.put_pixel(x, y, image::Rgb(self.rgb[self.index(x, y)]));
            }
        }
        if let Some(id) = highlight {
            for y in 0..self.height {
                for x in 0..self.width {
                    if self.owner(x, y) != Some(id) {
                        continue;
                    }
                    let edge = neighbours4(x, y, self.width, self.height)
                        .into_iter()
                        .any(|n| n.is_none_or(|(nx, ny)| self.owner(nx, ny) != Some(id)));
                    if edge {
                        img.put_pixel(x, y, image::Rgb([255, 255, 255]));
                    }
                }
            }
        }
        img
    }

    pub fn save_png(&self, path: impl AsRef<Path>, highlight: Option<ObjectId>) -> Result<(), SceneError> {
        self.to_image(highlight).save(path)?;
        Ok(())
    }
}

pub const BACKGROUND_RGB: [u8; 3] = [200, 200, 190];

pub(crate) fn neighbours4(x: u32, y: u32, w: u32, h: u32) -> [Option<(u32, u32)>; 4] {
    [
        x.checked_sub(1).map(|nx| (nx, y)),
        (x + 1 < w).then_some((x + 1, y)),
        y.checked_sub(1).map(|ny| (x, ny)),
        (y + 1 < h).then_some((x, y + 1)),
    ]
}

fn perspective(y: f64) -> f64 {
    0.7 + 0.6 * y
}

/// Triangle footprint of a cone in pixel coordinates: apex, base-left, base-right.
pub fn cone_triangle(obj: &SceneObject, width: u32, height: u32) -> [[f64; 2]; 3] {
    let s = perspective(obj.y);
    let (w, h) = (CONE_WIDTH * s * width as f64, CONE_HEIGHT * s * height as f64);
    let (cx, cy) = (obj.x * width as f64, obj.y * height as f64);
    [
        [cx, cy - h / 2.0],
        [cx - w / 2.0, cy + h / 2.0],
        [cx + w / 2.0, cy + h / 2.0],
    ]
}

fn pixel_noise(id: ObjectId, pixel: usize, channel: usize) -> f64 {
    let h = mix_seed(u64::from(id.0) << 32 | channel as u64, pixel as u64);
    (h % (2 * PIXEL_NOISE + 1)) as f64 - PIXEL_NOISE as f64
}

/// Painter's-algorithm rasterisation, back (small y) to front.
pub fn render(scene: &Scene) -> Raster {
    let mut raster = Raster::blank(scene.width, scene.height);
    let mut order: Vec<&SceneObject> = scene.objects.iter().filter(|o| !o.is_composite).collect();
    order.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.id.cmp(&b.id)));
    for obj in order {
        draw_cone(&mut raster, obj);
    }
    raster
}

fn draw_cone(raster: &mut Raster, obj: &SceneObject) {
    let [apex, left, right] = cone_triangle(obj, raster.width, raster.height);
    let (top, bottom) = (apex[1], left[1]);
    let (half_w, h) = ((right[0] - left[0]) / 2.0, bottom - top);
    let cx = apex[0];
    let base = obj.colour.base_rgb();
    let depth = 0.98 + 0.04 * obj.y;

    let y0 = top.ceil().max(0.0) as u32;
    let y1 = (bottom.floor() as i64).min(raster.height as i64 - 1);
    let x0 = (cx - half_w).ceil().max(0.0) as u32;
    let x1 = ((cx + half_w).floor() as i64).min(raster.width as i64 - 1);
    if y1 < y0 as i64 || x1 < x0 as i64 {
        return;
    }
    for py in y0..=y1 as u32 {
        let t = (py as f64 - top) / h;
        let reach = half_w * t;
        let shade = (1.0 + SHADE_SPAN) - 2.0 * SHADE_SPAN * t;
        for px in x0..=x1 as u32 {
            if (px as f64 - cx).abs() > reach {
                continue;
            }
            let i = raster.index(px, py);
            let mut rgb = [0u8; 3];
            for c in 0..3 {
                let v = base[c] * shade * depth + pixel_noise(obj.id, i, c);
                rgb[c] = v.round().clamp(0.0, 255.0) as u8;
            }
            raster.set(px, py, rgb, Some(obj.id));
        }
    }
}

/// A scene together with its raster. Visual features are computed lazily,
/// once, and shared by every reader of the frame.
#[derive(Debug)]
pub struct Frame {
    pub scene: Scene,
    pub raster: Raster,
    features: OnceLock<FrameFeatures>,
}

impl Frame {
    pub fn new(scene: Scene) -> Self {
        let raster = render(&scene);
        Frame::with_raster(scene, raster)
    }

    /// Frame over an externally supplied raster; used for hand-built fixtures.
    pub fn with_raster(scene: Scene, raster: Raster) -> Self {
        Frame {
            scene,
            raster,
            features: OnceLock::new(),
        }
    }

    pub fn features(&self) -> &FrameFeatures {
        self.features.get_or_init(|| FrameFeatures::extract(&self.raster))
    }
}

#[derive(Clone, Debug)]
pub struct SceneState {
    pub current: Arc<Frame>,
    pub previous: Option<Arc<Frame>>,
    pub last_removed: Option<ObjectId>,
    pub rng_seed: u64,
}

impl SceneState {
    pub fn new(scene: Scene) -> Self {
        let seed = scene.seed;
        SceneState::from_frame(Frame::new(scene), seed)
    }

    pub fn from_frame(frame: Frame, rng_seed: u64) -> Self {
        SceneState {
            current: Arc::new(frame),
            previous: None,
            last_removed: None,
            rng_seed,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.current.scene
    }

    /// Removes a base object; the old frame becomes the anaphora context.
    pub fn remove_object(&self, id: ObjectId) -> Result<SceneState, SceneError> {
        let obj = self.current.scene.get(id).ok_or(SceneError::NotFound(id))?;
        if obj.is_composite {
            return Err(SceneError::Composite(id));
        }
        let mut scene = self.current.scene.clone();
        scene.objects.retain(|o| o.id != id && !o.is_composite);
        Ok(SceneState {
            current: Arc::new(Frame::new(scene)),
            previous: Some(Arc::clone(&self.current)),
            last_removed: Some(id),
            rng_seed: self.rng_seed,
        })
    }
}

/// Seeded scene: uniform positions with a minimum centre separation and a fair
/// coin for each cone's colour.
pub fn generate_scene(seed: u64, n_objects: usize) -> Result<SceneState, SceneError> {
    Ok(SceneState::new(generate_layout(seed, n_objects)?))
}

pub fn generate_layout(seed: u64, n_objects: usize) -> Result<Scene, SceneError> {
    if !(1..=MAX_OBJECTS).contains(&n_objects) {
        return Err(SceneError::ObjectCount(n_objects));
    }
    // A layout that leaves a cone without pixels is redrawn from a derived seed.
    for attempt in 0..8u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(if attempt == 0 { seed } else { mix_seed(seed, attempt) });
        let mut objects: Vec<SceneObject> = Vec::with_capacity(n_objects);
        for index in 0..n_objects {
            let mut placed = None;
            for _ in 0..PLACEMENT_RETRIES {
                let x = rng.random_range(BOARD_MARGIN..=1.0 - BOARD_MARGIN);
                let y = rng.random_range(BOARD_MARGIN..=1.0 - BOARD_MARGIN);
                let clear = objects
                    .iter()
                    .all(|o| ((o.x - x).powi(2) + (o.y - y).powi(2)).sqrt() >= MIN_SEPARATION);
                if clear {
                    placed = Some((x, y));
                    break;
                }
            }
            let (x, y) = placed.ok_or(SceneError::Placement {
                seed,
                index,
                retries: PLACEMENT_RETRIES,
            })?;
            let colour = if rng.random_bool(0.5) {
                ColourClass::Green
            } else {
                ColourClass::Purple
            };
            objects.push(SceneObject::cone(index as u32, x, y, colour));
        }
        let scene = Scene::new(seed, objects);
        let raster = render(&scene);
        let drawn: std::collections::HashSet<ObjectId> = raster.owners.iter().flatten().copied().collect();
        if scene.objects.iter().all(|o| drawn.contains(&o.id)) {
            return Ok(scene);
        }
    }
    Err(SceneError::Placement {
        seed,
        index: n_objects,
        retries: PLACEMENT_RETRIES,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scene(7, 30).unwrap();
        let b = generate_scene(7, 30).unwrap();
        assert_eq!(a.scene(), b.scene());
        assert_eq!(a.current.raster, b.current.raster);
        assert_eq!(a.scene().to_json(), b.scene().to_json());
        assert!(a.previous.is_none() && a.last_removed.is_none());
    }

    #[test]
    fn object_count_precondition() {
        assert!(matches!(generate_scene(7, 0), Err(SceneError::ObjectCount(0))));
        assert!(matches!(generate_scene(7, 31), Err(SceneError::ObjectCount(31))));
    }

    #[test]
    fn mean_green_count_matches_binomial() {
        // Binomial(30, 0.5) has mean 15; the mean of 1000 draws has sd ~0.087.
        let total: usize = (0..1000u64)
            .map(|s| {
                generate_layout(s, 30)
                    .unwrap()
                    .objects
                    .iter()
                    .filter(|o| o.colour == ColourClass::Green)
                    .count()
            })
            .sum();
        let mean = total as f64 / 1000.0;
        assert!((14.5..=15.5).contains(&mean), "mean green count {mean}");
    }

    #[test]
    fn separation_and_visibility() {
        for seed in 0..50 {
            let state = generate_scene(seed, 30).unwrap();
            let objs = &state.scene().objects;
            for (i, a) in objs.iter().enumerate() {
                assert!(state.current.raster.pixel_count(a.id) > 0);
                for b in &objs[i + 1..] {
                    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                    assert!(d >= MIN_SEPARATION);
                }
            }
        }
    }

    #[test]
    fn single_cone_owns_its_pixels() {
        let scene = Scene::new(0, vec![SceneObject::cone(4, 0.5, 0.5, ColourClass::Green)]);
        let raster = render(&scene);
        assert!(raster.pixel_count(ObjectId(4)) > 0);
        assert!(raster.owners.iter().all(|o| o.is_none() || *o == Some(ObjectId(4))));
        assert_eq!(raster, render(&scene));
    }

    #[test]
    fn front_cone_wins_overlap() {
        // B sits slightly in front of A and overlaps its base.
        let a = SceneObject::cone(0, 0.5, 0.50, ColourClass::Green);
        let b = SceneObject::cone(1, 0.5, 0.52, ColourClass::Purple);
        let scene = Scene::new(0, vec![b.clone(), a.clone()]);
        let raster = render(&scene);
        let alone_a = render(&Scene::new(0, vec![a]));
        let alone_b = render(&Scene::new(0, vec![b]));
        let mut overlap = 0;
        for i in 0..raster.owners.len() {
            if alone_a.owners[i].is_some() && alone_b.owners[i].is_some() {
                overlap += 1;
                assert_eq!(raster.owners[i], Some(ObjectId(1)));
            }
        }
        assert!(overlap > 0);
    }

    #[test]
    fn removal_keeps_one_step_history() {
        let s0 = generate_scene(3, 5).unwrap();
        let s1 = s0.remove_object(ObjectId(2)).unwrap();
        assert_eq!(s1.last_removed, Some(ObjectId(2)));
        assert!(!s1.scene().contains(ObjectId(2)));
        assert!(s1.previous.as_ref().unwrap().scene.contains(ObjectId(2)));
        let s2 = s1.remove_object(ObjectId(4)).unwrap();
        assert_eq!(s2.last_removed, Some(ObjectId(4)));
        let prev = s2.previous.as_ref().unwrap();
        assert!(!prev.scene.contains(ObjectId(2)));
        assert!(prev.scene.contains(ObjectId(4)));
        assert!(matches!(s2.remove_object(ObjectId(2)), Err(SceneError::NotFound(_))));
    }

    #[test]
    fn removing_last_object_empties_scene() {
        let s0 = generate_scene(9, 1).unwrap();
        let s1 = s0.remove_object(ObjectId(0)).unwrap();
        assert!(s1.scene().objects.is_empty());
        assert!(s1.current.raster.owners.iter().all(Option::is_none));
        assert_eq!(s1.previous.as_ref().unwrap().scene.objects.len(), 1);
    }

    #[test]
    fn document_round_trip() {
        let scene = generate_layout(11, 12).unwrap();
        let back = Scene::from_json(&scene.to_json()).unwrap();
        assert_eq!(scene, back);
        let mut doc = scene.to_document();
        doc.objects[1].id = doc.objects[0].id;
        assert!(Scene::from_document(&doc).is_err());
    }
}

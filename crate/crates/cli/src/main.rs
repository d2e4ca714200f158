use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bishop_core::harness::{baseline, evaluate, Corpus};
use bishop_core::lexicon::{refit_colour_models, Lexicon};
use bishop_core::par::Strategy;
use bishop_core::resolution::{Engine, EngineConfig};
use bishop_core::scene::{generate_scene, Scene, SceneState, MAX_OBJECTS};
use bishop_core::vision::VisionContext;
use clap::{Args, Parser, Subcommand};

/// Resolve spoken-style referring expressions against synthetic cone scenes.
#[derive(Parser)]
#[command(name = "bishop", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct LexiconArg {
    /// Lexicon file; the packaged lexicon is used when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

impl LexiconArg {
    fn engine(&self) -> Result<Engine> {
        let lexicon = match &self.lexicon {
            Some(p) => Lexicon::load(p).with_context(|| format!("loading lexicon {}", p.display()))?,
            None => Lexicon::packaged(),
        };
        Ok(Engine::new(lexicon, EngineConfig::default()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded scene document.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = MAX_OBJECTS)]
        objects: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the rendered raster.
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Resolve one utterance and print the resolution as JSON.
    Resolve {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        utterance: String,
        /// Print every chart edge before the resolution.
        #[arg(long)]
        chart: bool,
        /// Write the raster with the chosen object outlined.
        #[arg(long)]
        png: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        lexicon: LexiconArg,
    },
    /// Replay a JSONL corpus and report accuracy per strategy tag.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        /// Minimum overall accuracy for a zero exit code.
        #[arg(long, default_value_t = 1.0)]
        floor: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
        #[command(flatten)]
        lexicon: LexiconArg,
    },
    /// Success rate of a listener that guesses uniformly at random.
    Baseline {
        #[arg(long, default_value_t = 10_000)]
        sessions: usize,
        #[arg(long, default_value_t = MAX_OBJECTS)]
        trials: usize,
        #[arg(long, default_value_t = MAX_OBJECTS)]
        objects: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        sequential: bool,
    },
    /// Per-object visual features of a scene as CSV.
    Features {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Refit the colour models from labelled rendered cones.
    FitColours {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[command(flatten)]
        lexicon: LexiconArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn strategy(sequential: bool) -> Strategy {
    if sequential {
        Strategy::Sequential
    } else {
        Strategy::Parallel
    }
}

fn load_scene(path: &PathBuf) -> Result<Scene> {
    Scene::load(path).with_context(|| format!("loading scene {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen {
            seed,
            objects,
            out,
            png,
        } => {
            let state = generate_scene(seed, objects)?;
            state
                .scene()
                .save(&out)
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(p) = png {
                state.current.raster.save_png(&p, None)?;
            }
        }
        Command::Resolve {
            scene,
            utterance,
            chart,
            png,
            seed,
            lexicon,
        } => {
            let engine = lexicon.engine()?;
            let state = SceneState::new(load_scene(&scene)?);
            let (resolution, parsed) = engine.resolve_with_chart(&utterance, &state, seed);
            if chart {
                print!("{}", parsed.dump());
            }
            println!("{}", serde_json::to_string_pretty(&resolution)?);
            if let Some(p) = png {
                state.current.raster.save_png(&p, resolution.chosen)?;
            }
        }
        Command::Eval {
            corpus,
            floor,
            seed,
            json,
            sequential,
            lexicon,
        } => {
            let engine = lexicon.engine()?;
            let corpus = Corpus::load(&corpus).with_context(|| format!("loading corpus {}", corpus.display()))?;
            let report = evaluate(&corpus, &engine, seed, strategy(sequential))?;
            print!("{report}");
            if let Some(p) = json {
                std::fs::write(&p, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", p.display()))?;
            }
            if report.accuracy < floor {
                eprintln!("accuracy {:.4} is below the floor {floor:.4}", report.accuracy);
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Baseline {
            sessions,
            trials,
            objects,
            seed,
            sequential,
        } => {
            let report = baseline(sessions, trials, objects, seed, strategy(sequential))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Features { scene } => {
            let state = SceneState::new(load_scene(&scene)?);
            let ctx = VisionContext::new(&state.current, Default::default());
            print!("{}", ctx.features_csv());
        }
        Command::FitColours {
            seed,
            per_class,
            lexicon,
            out,
        } => {
            if per_class == 0 {
                bail!("--per-class must be at least 1");
            }
            let refit = refit_colour_models(lexicon.engine()?.lexicon(), seed, per_class)?;
            std::fs::write(&out, refit.to_json()).with_context(|| format!("writing {}", out.display()))?;
            for m in refit.colour_models() {
                eprintln!("{}: mean {:?}", m.name, m.mean);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

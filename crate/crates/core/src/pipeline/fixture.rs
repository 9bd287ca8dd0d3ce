//! Offline synthetic dataset: five classes, description documents, three
//! caption observers and cluster-structured features.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use super::run::write_ground_truth;
use crate::captioner::{cluster_stack, feature_path, Modality};
use crate::error::{Error, Result};
use crate::observers::{write_caption_records, CaptionRecord};

struct FixtureClass {
    label: &'static str,
    document: &'static str,
    /// Caption templates per observer; `{}` is replaced by a subject.
    captions: [&'static [&'static str]; 3],
}

const SUBJECTS: &[&str] = &["a man", "a woman", "a girl", "a boy", "someone"];

const CLASSES: &[FixtureClass] = &[
    FixtureClass {
        label: "HorseRiding",
        document: "Horse riding is the skill of riding a horse while sitting in a leather saddle.\n\
            A rider controls the horse with the reins, the legs and the voice during every gallop.\n\
            Riders can't steer well without reins.\n\
            \n\
            Many riders learn horse riding at a stable where each horse is groomed before riding.\n\
            The rider should check the saddle and stirrups before mounting the horse.\n\
            \n\
            Horse riding competitions include jumping, racing and dressage on a grass arena with a horse and rider.\n\
            A good rider keeps balance in the saddle while the horse trots or gallops.",
        captions: [
            &["{} is riding a horse", "{} rides a brown horse in a field"],
            &["a rider sits in the saddle of a horse", "a horse gallops with a rider"],
            &["{} holds the reins of a horse", "a horse and rider trot on grass"],
        ],
    },
    FixtureClass {
        label: "GuitarPlaying",
        document: "Guitar playing means producing music by plucking or strumming the strings of a guitar.\n\
            A guitarist presses the strings on the fretboard with one hand to form chords.\n\
            It isn't easy at first.\n\
            \n\
            Playing the guitar well requires practice of chords, scales and rhythm every single day.\n\
            An acoustic guitar sounds through its hollow body while an electric guitar needs an amplifier.\n\
            \n\
            Many musicians start guitar playing by learning simple chords and strumming songs for friends.\n\
            The guitarist tunes each guitar string with the tuning pegs before playing music.",
        captions: [
            &["{} is playing a guitar", "{} strums an acoustic guitar"],
            &["a guitarist plays chords on a guitar", "a musician plays guitar music"],
            &[
                "{} plucks the strings of a guitar",
                "guitar strings are strummed by a guitarist",
            ],
        ],
    },
    FixtureClass {
        label: "BallKicking",
        document: "Ball kicking is striking a soccer ball with the foot to pass or shoot at the goal.\n\
            A player kicks the ball with the inside of the foot for accurate passes to teammates.\n\
            Kicking hard isn't always better.\n\
            \n\
            In soccer training every player practices kicking the ball toward the goal from different distances.\n\
            The goalkeeper tries to stop each kicked ball before it crosses the goal line.\n\
            \n\
            A strong kick of the ball needs a planted foot, a swinging leg and a follow through.\n\
            Children often learn ball kicking by playing soccer with friends on a pitch.",
        captions: [
            &["{} is kicking a ball", "{} kicks a soccer ball"],
            &[
                "a player kicks the ball toward the goal",
                "a soccer player kicks a ball",
            ],
            &["{} strikes a ball with the foot", "a ball is kicked into a goal"],
        ],
    },
    FixtureClass {
        label: "CakeCutting",
        document: "Cake cutting is slicing a cake with a knife into pieces to share at a celebration.\n\
            The person cutting the cake pushes the knife down through the frosting and sponge.\n\
            Don't press too hard.\n\
            \n\
            At weddings and birthdays the first cut of the cake is an important moment for guests.\n\
            A sharp knife dipped in warm water makes cleaner slices through a layered cake.\n\
            \n\
            Each slice of cake is placed on a plate after cutting and served with a fork.\n\
            Bakers decorate the cake with frosting and candles before the cake cutting begins.",
        captions: [
            &["{} is cutting a cake", "{} cuts a birthday cake with a knife"],
            &["a knife slices a cake with frosting", "a slice of cake is cut"],
            &["{} slices a cake into pieces", "cake cutting with a knife on a plate"],
        ],
    },
    FixtureClass {
        label: "WallClimbing",
        document: "Wall climbing is the sport of climbing up an artificial wall using holds for hands and feet.\n\
            A climber wears a harness attached to a rope held by a partner on the ground.\n\
            Climbers won't fall far with a rope.\n\
            \n\
            Indoor climbing walls have colored holds that mark routes of different difficulty for each climber.\n\
            The climber grips the holds with chalked hands while climbing toward the top of the wall.\n\
            \n\
            Wall climbing builds strength in the fingers, arms and legs of every climber over time.\n\
            Before climbing the wall a climber checks the harness, the rope and the knot.",
        captions: [
            &["{} is climbing a wall", "{} climbs a climbing wall"],
            &[
                "a climber grips holds on a wall",
                "a climber in a harness climbs a wall",
            ],
            &[
                "{} climbs up a wall with a rope",
                "wall climbing with a harness and rope",
            ],
        ],
    },
];

/// Class labels of the synthetic fixture, sorted.
pub const FIXTURE_CLASSES: &[&str] = &[
    "BallKicking",
    "CakeCutting",
    "GuitarPlaying",
    "HorseRiding",
    "WallClimbing",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub videos_per_class: usize,
    pub feature_dim: usize,
    pub audio_dim: usize,
    pub n_c: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            videos_per_class: 20,
            feature_dim: 16,
            audio_dim: 8,
            n_c: 4,
            seed: 0,
        }
    }
}

/// Writes the fixture under `dir`: `descriptions/`, `captions/OB{1,2,3}.jsonl`,
/// `features/`, `ground_truth.tsv` and `config.json`.
pub fn generate_fixture(dir: &Path, spec: &FixtureSpec) -> Result<()> {
    if spec.videos_per_class == 0 || spec.feature_dim == 0 || spec.n_c == 0 {
        return Err(Error::Config("fixture sizes must be positive".into()));
    }
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let (desc, caps, feats) = (dir.join("descriptions"), dir.join("captions"), dir.join("features"));
    for d in [&desc, &caps, &feats] {
        mkdir(d)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = BTreeMap::new();
    let mut records: [Vec<CaptionRecord>; 3] = Default::default();
    for class in CLASSES {
        let path = desc.join(format!("{}.txt", class.label));
        std::fs::write(&path, format!("{}\n", class.document)).map_err(|e| Error::io(&path, e))?;
        let center: Vec<f64> = (0..spec.feature_dim)
            .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let audio_center: Vec<f64> = (0..spec.audio_dim)
            .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        for v in 0..spec.videos_per_class {
            let id = format!("{}_{v:02}", class.label);
            truth.insert(id.clone(), class.label.to_string());
            for (o, templates) in class.captions.iter().enumerate() {
                let t = templates[(v + o) % templates.len()];
                let subject = SUBJECTS[(v * 3 + o) % SUBJECTS.len()];
                records[o].push(CaptionRecord {
                    video_id: id.clone(),
                    observer_id: format!("OB{}", o + 1),
                    sentence: format!("{}.", t.replace("{}", subject)),
                });
            }
            cluster_stack(&id, Modality::Visual, &center, spec.n_c, 0.5, &mut rng)?
                .with_stack_length(16)
                .save(&feature_path(&feats, &id, Modality::Visual))?;
            if spec.audio_dim > 0 {
                cluster_stack(&id, Modality::Audio, &audio_center, spec.n_c, 0.5, &mut rng)?.save(&feature_path(
                    &feats,
                    &id,
                    Modality::Audio,
                ))?;
            }
        }
    }
    for (o, recs) in records.iter().enumerate() {
        write_caption_records(&caps.join(format!("OB{}.jsonl", o + 1)), recs)?;
    }
    write_ground_truth(&dir.join("ground_truth.tsv"), &truth)?;
    let config = json!({
        "dataset": "synthetic",
        "paths": {
            "descriptions": "descriptions",
            "ground_truth": "ground_truth.tsv",
            "captions": "captions",
            "features": "features",
            "output": "out"
        },
        "prototypes": {"mode": "sentences", "min_words": 10, "max_sentences": 10},
        "embedders": {"selection": "bow", "joint": "bow"},
        "seed": spec.seed
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config)? + "\n").map_err(|e| Error::io(&path, e))
}

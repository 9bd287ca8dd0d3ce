//! Cluster-structured synthetic features paired with template captions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::features::{FeatureStack, Modality, VideoFeatures};
use crate::error::Result;
use crate::tensor::Matrix;
use crate::text::{Origin, Sentence};

const SUBJECTS: &[&str] = &["a man", "a woman", "a child", "two people", "a dog"];
const ACTIONS: &[&str] = &[
    "is riding a horse",
    "is playing a guitar",
    "is kicking a ball",
    "is cutting a cake",
    "is climbing a wall",
    "is swimming in a pool",
];

/// Template caption number `i`; distinct for `i < 30`.
pub fn template_caption(i: usize) -> String {
    format!(
        "{} {}",
        SUBJECTS[i % SUBJECTS.len()],
        ACTIONS[(i / SUBJECTS.len()) % ACTIONS.len()]
    )
}

/// Stack of `n_c` vectors scattered around `center` with spread `noise`.
pub fn cluster_stack<R: Rng>(
    video_id: &str,
    modality: Modality,
    center: &[f64],
    n_c: usize,
    noise: f64,
    rng: &mut R,
) -> Result<FeatureStack> {
    let dim = center.len();
    let data = (0..n_c * dim)
        .map(|k| center[k % dim] + noise * rng.sample::<f64, _>(StandardNormal))
        .collect();
    FeatureStack::new(video_id, modality, Matrix::from_vec(n_c, dim, data)?)
}

/// `n` (features, caption) pairs; pair `i` has caption [`template_caption`]`(i)`
/// and its own random cluster center. With `asm_dim`, an audio stream is added.
pub fn synthetic_caption_corpus(
    n: usize,
    d_visual: usize,
    asm_dim: Option<usize>,
    n_c: usize,
    seed: u64,
) -> Result<Vec<(VideoFeatures, Sentence)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let id = format!("syn{i:03}");
            let center: Vec<f64> = (0..d_visual).map(|_| rng.sample(StandardNormal)).collect();
            let visual = cluster_stack(&id, Modality::Visual, &center, n_c, 0.1, &mut rng)?;
            let video = match asm_dim {
                Some(d) => {
                    let c: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    VideoFeatures::bimodal(visual, cluster_stack(&id, Modality::Audio, &c, n_c, 0.1, &mut rng)?)
                }
                None => VideoFeatures::visual(visual),
            };
            Ok((video, Sentence::new(&template_caption(i), Origin::Observer)))
        })
        .collect()
}

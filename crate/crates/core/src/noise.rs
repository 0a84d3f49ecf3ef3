//! Driving noise: cylindrical Brownian increments and finite-activity Poisson
//! random measures with compensator `dt ⊗ F`.
//!
//! Every sample path owns a [`RandomStream`]: a ChaCha8 keystream keyed by the
//! run seed and selected by the path index. Output therefore depends only on
//! `(seed, path_index)` and not on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::quadrature::gauss_hermite_normal;

/// Counter-based per-path random source.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    path_index: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            seed,
            path_index,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Position in the keystream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn exponential(&mut self) -> f64 {
        self.rng.sample(Exp1)
    }
}

/// Law of the jump marks, normalized to a probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MarkLaw {
    Atom { mark: Vec<f64> },
    /// Independent normal coordinates with common standard deviation.
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl MarkLaw {
    pub fn dim(&self) -> usize {
        match self {
            Self::Atom { mark } => mark.len(),
            Self::Gaussian { mean, .. } => mean.len(),
        }
    }

    fn sample(&self, stream: &mut RandomStream) -> Vec<f64> {
        match self {
            Self::Atom { mark } => mark.clone(),
            Self::Gaussian { mean, std } => mean.iter().map(|m| m + std * stream.normal()).collect(),
        }
    }
}

/// A finite intensity measure `F` on `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpMeasureSpec {
    total_mass: f64,
    law: Option<MarkLaw>,
    quadrature: Vec<(Vec<f64>, f64)>,
}

impl JumpMeasureSpec {
    /// No jumps: `F = 0`.
    pub fn none() -> Self {
        Self {
            total_mass: 0.0,
            law: None,
            quadrature: Vec::new(),
        }
    }

    /// `F = rate · δ_mark`.
    pub fn single_atom(rate: f64, mark: Vec<f64>) -> Self {
        assert!(rate >= 0.0 && rate.is_finite(), "jump rate must be finite and >= 0");
        Self {
            total_mass: rate,
            quadrature: vec![(mark.clone(), rate)],
            law: Some(MarkLaw::Atom { mark }),
        }
    }

    /// `F = rate · N(mean, std² I)`; the compensator quadrature is a tensor
    /// Gauss–Hermite rule with `points` nodes per coordinate.
    pub fn compound_gaussian(rate: f64, mean: Vec<f64>, std: f64, points: usize) -> Self {
        assert!(rate >= 0.0 && rate.is_finite(), "jump rate must be finite and >= 0");
        assert!(std >= 0.0, "mark std must be >= 0");
        let rule = gauss_hermite_normal(points.max(1));
        let d = mean.len();
        let mut quadrature = vec![(Vec::with_capacity(d), rate)];
        for m in &mean {
            quadrature = quadrature
                .into_iter()
                .flat_map(|(node, w)| {
                    rule.nodes.iter().zip(&rule.weights).map(move |(x, wx)| {
                        let mut next = node.clone();
                        next.push(m + std * x);
                        (next, w * wx)
                    })
                })
                .collect();
        }
        Self {
            total_mass: rate,
            law: Some(MarkLaw::Gaussian { mean, std }),
            quadrature,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn law(&self) -> Option<&MarkLaw> {
        self.law.as_ref()
    }

    pub fn mark_dim(&self) -> usize {
        self.law.as_ref().map_or(0, MarkLaw::dim)
    }

    /// Nodes and weights approximating `∫ · dF`; weights sum to `total_mass`.
    pub fn quadrature(&self) -> &[(Vec<f64>, f64)] {
        &self.quadrature
    }

    pub fn is_empty(&self) -> bool {
        self.total_mass == 0.0
    }

    /// `∫ g dF` by the compensator quadrature.
    pub fn integrate(&self, mut g: impl FnMut(&[f64]) -> f64) -> f64 {
        self.quadrature.iter().map(|(y, w)| w * g(y)).sum()
    }
}

/// One atom of the Poisson random measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
}

/// Brownian increments over a step of length `dt`, one per noise mode.
pub fn bm_increments(dt: f64, n_noise: usize, stream: &mut RandomStream) -> Vec<f64> {
    let mut out = vec![0.0; n_noise];
    fill_bm_increments(dt, &mut out, stream);
    out
}

pub fn fill_bm_increments(dt: f64, out: &mut [f64], stream: &mut RandomStream) {
    assert!(dt > 0.0, "time step must be positive");
    let s = dt.sqrt();
    for w in out.iter_mut() {
        *w = s * stream.normal();
    }
}

/// Events of the Poisson random measure on `(t0, t1]`, in increasing time.
pub fn poisson_events(
    t0: f64,
    t1: f64,
    spec: &JumpMeasureSpec,
    stream: &mut RandomStream,
) -> Vec<JumpEvent> {
    assert!(t0 < t1, "empty window ({t0}, {t1}]");
    let mut events = Vec::new();
    let Some(law) = spec.law.as_ref() else {
        return events;
    };
    if spec.total_mass == 0.0 {
        return events;
    }
    let mut t = t0;
    loop {
        t += stream.exponential() / spec.total_mass;
        if t > t1 {
            break;
        }
        if t > t0 {
            events.push(JumpEvent {
                time: t,
                mark: law.sample(stream),
            });
        }
    }
    events
}

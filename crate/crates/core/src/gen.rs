//! Seeded synthetic exchange pools.
//!
//! Two arc models: a plain density model, and a blood-type/PRA model in the
//! style of the Saidman generator (US population ABO frequencies, three PRA
//! bands with their positive-crossmatch rates). Vertices `0..num_ndds` are
//! NDDs, the rest are pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeSpec, ExchangeGraph, VertexKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenMode {
    /// Every legal arc independently with this probability.
    Density(f64),
    BloodType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDist {
    Unit,
    Uniform(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub num_pairs: usize,
    pub num_ndds: usize,
    pub mode: GenMode,
    pub weight_dist: WeightDist,
    /// Failure probabilities are drawn from U[prob_lo, prob_hi].
    pub prob_lo: f64,
    pub prob_hi: f64,
    pub seed: u64,
}

pub const DEFAULT_DENSITY: f64 = 0.1;

/// Pairs/NDDs for a pool of `size` vertices: 5 NDDs per 64 vertices, at
/// least one (64 → 59 + 5, 128 → 118 + 10).
pub fn default_split(size: usize) -> (usize, usize) {
    let ndds = ((size as f64 * 5.0 / 64.0).round() as usize).clamp(1, size.saturating_sub(1).max(1));
    (size.saturating_sub(ndds), ndds)
}

impl GenConfig {
    /// Density-mode pool of `size` vertices with unit weights and
    /// failure probabilities on [0.1, 0.9].
    pub fn with_size(size: usize, seed: u64) -> Self {
        let (num_pairs, num_ndds) = default_split(size);
        Self {
            num_pairs,
            num_ndds,
            mode: GenMode::Density(DEFAULT_DENSITY),
            weight_dist: WeightDist::Unit,
            prob_lo: 0.1,
            prob_hi: 0.9,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_pairs + self.num_ndds == 0 {
            return bad("pool must contain at least one vertex".into());
        }
        if let GenMode::Density(d) = self.mode {
            if !(0.0..=1.0).contains(&d) {
                return bad(format!("density must lie in [0, 1], got {d}"));
            }
        }
        if let WeightDist::Uniform(lo, hi) = self.weight_dist {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("weight range [{lo}, {hi}] must be positive and ordered"));
            }
        }
        if !(0.0 <= self.prob_lo && self.prob_lo <= self.prob_hi && self.prob_hi <= 1.0) {
            return bad(format!(
                "probability range [{}, {}] must be ordered within [0, 1]",
                self.prob_lo, self.prob_hi
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Abo {
    O,
    A,
    B,
    AB,
}

impl Abo {
    fn draw(rng: &mut impl Rng) -> Self {
        let u: f64 = rng.random();
        if u < 0.44 {
            Abo::O
        } else if u < 0.86 {
            Abo::A
        } else if u < 0.96 {
            Abo::B
        } else {
            Abo::AB
        }
    }

    fn can_give_to(self, patient: Abo) -> bool {
        matches!(
            (self, patient),
            (Abo::O, _) | (Abo::A, Abo::A | Abo::AB) | (Abo::B, Abo::B | Abo::AB) | (Abo::AB, Abo::AB)
        )
    }
}

/// Positive-crossmatch probability for a patient, by PRA band
/// (low .70 → .05, medium .20 → .45, high .10 → .90).
fn draw_crossmatch_fail(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    if u < 0.70 {
        0.05
    } else if u < 0.90 {
        0.45
    } else {
        0.90
    }
}

struct Donor {
    abo: Abo,
}

struct Patient {
    abo: Abo,
    crossmatch_fail: f64,
}

pub fn generate_instance(config: &GenConfig) -> Result<ExchangeGraph> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.num_ndds + config.num_pairs;
    let mut kinds = vec![VertexKind::Ndd; config.num_ndds];
    kinds.extend(std::iter::repeat_n(VertexKind::Pair, config.num_pairs));

    let mut arcs: Vec<(usize, usize)> = Vec::new();
    match config.mode {
        GenMode::Density(d) => {
            for s in 0..n {
                for t in config.num_ndds..n {
                    if s != t && rng.random::<f64>() < d {
                        arcs.push((s, t));
                    }
                }
            }
        }
        GenMode::BloodType => {
            let mut donors = Vec::with_capacity(n);
            let mut patients: Vec<Option<Patient>> = Vec::with_capacity(n);
            for &kind in &kinds {
                match kind {
                    VertexKind::Ndd => {
                        donors.push(Donor { abo: Abo::draw(&mut rng) });
                        patients.push(None);
                    }
                    VertexKind::Pair => {
                        // only incompatible pairs enter the pool
                        loop {
                            let patient = Patient {
                                abo: Abo::draw(&mut rng),
                                crossmatch_fail: draw_crossmatch_fail(&mut rng),
                            };
                            let donor = Donor { abo: Abo::draw(&mut rng) };
                            let compatible = donor.abo.can_give_to(patient.abo)
                                && rng.random::<f64>() >= patient.crossmatch_fail;
                            if !compatible {
                                donors.push(donor);
                                patients.push(Some(patient));
                                break;
                            }
                        }
                    }
                }
            }
            for s in 0..n {
                for (t, patient) in patients.iter().enumerate() {
                    let Some(patient) = patient else { continue };
                    if s == t || !donors[s].abo.can_give_to(patient.abo) {
                        continue;
                    }
                    if rng.random::<f64>() >= patient.crossmatch_fail {
                        arcs.push((s, t));
                    }
                }
            }
        }
    }

    let edges = arcs
        .into_iter()
        .map(|(s, t)| {
            let weight = match config.weight_dist {
                WeightDist::Unit => 1.0,
                WeightDist::Uniform(lo, hi) if lo == hi => lo,
                WeightDist::Uniform(lo, hi) => rng.random_range(lo..=hi),
            };
            let p = if config.prob_lo == config.prob_hi {
                config.prob_lo
            } else {
                rng.random_range(config.prob_lo..=config.prob_hi)
            };
            EdgeSpec::new(s, t, weight, p)
        })
        .collect();
    ExchangeGraph::new(kinds, edges)
}

//! Cluster samplers with intra-cluster correlation.
//!
//! All three generators share mean `m p_c` and cell variance
//! `m p_c (1 - p_c) (1 + (m - 1) ρ)`:
//!
//! * Dirichlet-multinomial: `q ~ Dirichlet(p (1 - ρ) / ρ)`, counts
//!   `~ Multinomial(m, q)`.
//! * random-clumped: a clump of size `B ~ Binomial(m, √ρ)` lands in one cell
//!   `D ~ Categorical(p)`; the other `m - B` individuals are multinomial.
//! * m-inflated: with probability `ρ` the whole cluster falls in one cell,
//!   otherwise the cluster is multinomial.
//!
//! At `ρ = 0` every generator performs exactly the same multinomial draw, so
//! a shared random stream yields identical samples across generators.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};

use crate::error::{Error, Result};
use crate::glm::{ClusterTable, SurveyDataset};

/// Redraws allowed before a degenerate sample becomes a hard error.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClusterDistribution {
    DirichletMultinomial,
    RandomClumped,
    MInflated,
}

impl ClusterDistribution {
    pub const ALL: [ClusterDistribution; 3] = [
        ClusterDistribution::DirichletMultinomial,
        ClusterDistribution::RandomClumped,
        ClusterDistribution::MInflated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClusterDistribution::DirichletMultinomial => "dirichlet-multinomial",
            ClusterDistribution::RandomClumped => "random-clumped",
            ClusterDistribution::MInflated => "m-inflated",
        }
    }

    /// Checks `ρ ∈ [0, 1)`, or `[0, 1]` for the m-inflated mixture.
    pub fn check_rho(self, rho: f64) -> Result<()> {
        let ok = match self {
            ClusterDistribution::MInflated => (0.0..=1.0).contains(&rho),
            _ => (0.0..1.0).contains(&rho),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("rho = {rho} is invalid for {}", self.name())))
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, m: u64, rho: f64, p: &[f64], rng: &mut R) -> Result<Vec<u64>> {
        match self {
            ClusterDistribution::DirichletMultinomial => dirichlet_multinomial_draw(m, rho, p, rng),
            ClusterDistribution::RandomClumped => random_clumped_draw(m, rho, p, rng),
            ClusterDistribution::MInflated => m_inflated_draw(m, rho, p, rng),
        }
    }
}

impl fmt::Display for ClusterDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClusterDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClusterDistribution::ALL
            .into_iter()
            .find(|d| d.name() == s.trim())
            .ok_or_else(|| Error::Usage(format!("unknown distribution '{s}'")))
    }
}

/// Random stream for replicate `replicate` of an experiment seeded with
/// `seed`: ChaCha8 keyed by `seed`, with the replicate index as stream id.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Usage("empty probability vector".into()));
    }
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain("cell probabilities must be non-negative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!("cell probabilities sum to {total}, not 1")));
    }
    Ok(())
}

fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p in (0, 1)").sample(rng)
}

/// `Multinomial(m, p)` by sequential conditional binomials. `p` need only
/// be non-negative; it is normalised on the fly.
fn multinomial<R: Rng + ?Sized>(m: u64, p: &[f64], rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0; p.len()];
    let mut remaining = m;
    let mut mass: f64 = p.iter().sum();
    let last = p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    for (c, &pc) in p.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if c == last {
            counts[c] = remaining;
            break;
        }
        let draw = binomial(remaining, pc / mass, rng);
        counts[c] = draw;
        remaining -= draw;
        mass -= pc;
    }
    counts
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random::<f64>() * p.iter().sum::<f64>();
    let mut acc = 0.0;
    let last = p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    for (c, &pc) in p.iter().enumerate().take(last) {
        acc += pc;
        if u < acc {
            return c;
        }
    }
    last
}

/// `Multinomial(m, p)`.
pub fn multinomial_draw<R: Rng + ?Sized>(m: u64, p: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    check_probabilities(p)?;
    Ok(multinomial(m, p, rng))
}

/// Dirichlet-multinomial cluster with intra-cluster correlation `ρ`.
pub fn dirichlet_multinomial_draw<R: Rng + ?Sized>(m: u64, rho: f64, p: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    ClusterDistribution::DirichletMultinomial.check_rho(rho)?;
    check_probabilities(p)?;
    if rho == 0.0 {
        return Ok(multinomial(m, p, rng));
    }
    let scale = (1.0 - rho) / rho;
    // Gamma variates with tiny shapes underflow, so draw their logarithms:
    // G(a) = G(a + 1) U^{1/a}.
    let log_gamma: Vec<f64> = p
        .iter()
        .map(|&pc| {
            if pc == 0.0 {
                f64::NEG_INFINITY
            } else {
                let a = pc * scale;
                let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = rng.random::<f64>();
                g.ln() + (1.0 - u).ln() / a
            }
        })
        .collect();
    let top = log_gamma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let q: Vec<f64> = log_gamma.iter().map(|l| (l - top).exp()).collect();
    Ok(multinomial(m, &q, rng))
}

/// Random-clumped (Morel–Nagaraj) cluster.
pub fn random_clumped_draw<R: Rng + ?Sized>(m: u64, rho: f64, p: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    ClusterDistribution::RandomClumped.check_rho(rho)?;
    check_probabilities(p)?;
    if rho == 0.0 {
        return Ok(multinomial(m, p, rng));
    }
    let cell = categorical(p, rng);
    let clump = binomial(m, rho.sqrt(), rng);
    let mut counts = multinomial(m - clump, p, rng);
    counts[cell] += clump;
    Ok(counts)
}

/// m-inflated cluster: all `m` individuals in one cell with probability `ρ`.
pub fn m_inflated_draw<R: Rng + ?Sized>(m: u64, rho: f64, p: &[f64], rng: &mut R) -> Result<Vec<u64>> {
    ClusterDistribution::MInflated.check_rho(rho)?;
    check_probabilities(p)?;
    if rho == 0.0 {
        return Ok(multinomial(m, p, rng));
    }
    if rho == 1.0 || rng.random::<f64>() < rho {
        let mut counts = vec![0; p.len()];
        counts[categorical(p, rng)] = m;
        Ok(counts)
    } else {
        Ok(multinomial(m, p, rng))
    }
}

/// Layout and correlation of one simulated cluster sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSampleConfig {
    /// Cluster sizes `m_(j)`; their number is `J`.
    pub sizes: Vec<u64>,
    pub rho: f64,
    /// `2I` cell probabilities.
    pub p: Vec<f64>,
    pub dist: ClusterDistribution,
    pub seed: u64,
}

/// `clusters` sizes summing to `total`, as equal as possible, larger first.
pub fn balanced_sizes(clusters: usize, total: u64) -> Result<Vec<u64>> {
    if clusters == 0 || total < clusters as u64 {
        return Err(Error::Usage(format!(
            "cannot split {total} individuals into {clusters} non-empty clusters"
        )));
    }
    let base = total / clusters as u64;
    let extra = (total % clusters as u64) as usize;
    Ok((0..clusters)
        .map(|j| if j < extra { base + 1 } else { base })
        .collect())
}

impl ClusterSampleConfig {
    /// 50 clusters of 26 (the last of 25), `n = 1299`, cell probabilities
    /// from the Family Expenditure example.
    pub fn family_expenditure(dist: ClusterDistribution, rho: f64, seed: u64) -> Self {
        ClusterSampleConfig {
            sizes: balanced_sizes(50, crate::data::TOTAL_HOUSEHOLDS).expect("static layout"),
            rho,
            p: crate::data::cell_probabilities(),
            dist,
            seed,
        }
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> u64 {
        self.sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Usage("cluster sizes must be positive".into()));
        }
        if self.p.len() % 2 != 0 {
            return Err(Error::Usage("cell probabilities need an even length".into()));
        }
        self.dist.check_rho(self.rho)?;
        check_probabilities(&self.p)
    }
}

/// One draw of every cluster, without any degeneracy check.
pub fn draw_clusters<R: Rng + ?Sized>(config: &ClusterSampleConfig, rng: &mut R) -> Result<ClusterTable> {
    config.validate()?;
    let rows = config
        .sizes
        .iter()
        .map(|&m| config.dist.draw(m, config.rho, &config.p, rng))
        .collect::<Result<Vec<_>>>()?;
    ClusterTable::new(rows)
}

/// A simulated survey and its per-cluster counts.
#[derive(Debug, Clone)]
pub struct SimulatedSurvey {
    pub dataset: SurveyDataset,
    pub table: ClusterTable,
    /// Samples discarded because some domain was empty.
    pub redraws: usize,
}

/// Draws cluster samples from `rng` until every domain is observed.
pub fn simulate_survey_with<R: Rng + ?Sized>(
    config: &ClusterSampleConfig,
    design: &DMatrix<f64>,
    rng: &mut R,
) -> Result<SimulatedSurvey> {
    if design.nrows() * 2 != config.p.len() {
        return Err(Error::Usage(format!(
            "design has {} domains but {} cells were given",
            design.nrows(),
            config.p.len()
        )));
    }
    for redraws in 0..=MAX_REDRAWS {
        let table = draw_clusters(config, rng)?;
        match table.to_dataset(design.clone()) {
            Ok(dataset) => {
                return Ok(SimulatedSurvey {
                    dataset,
                    table,
                    redraws,
                })
            }
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Degenerate(format!(
        "every domain was not observed after {MAX_REDRAWS} redraws"
    )))
}

/// [`simulate_survey_with`] on stream 0 of `config.seed`.
pub fn simulate_survey(config: &ClusterSampleConfig, design: &DMatrix<f64>) -> Result<SimulatedSurvey> {
    simulate_survey_with(config, design, &mut replicate_rng(config.seed, 0))
}

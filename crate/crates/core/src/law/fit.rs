//! Accuracy surfaces and law fitting.
//!
//! Graded records are binned into an [`AccuracySurface`] (per-dimension
//! interval boxes with trial/success counts), then [`fit_law`] estimates the
//! combination-law parameters `(N_i, b_i)`, the optional constant `k`, and
//! the accuracy-link shape by minimizing a configured loss over bin
//! representative points with a multistart Nelder-Mead simplex.
//!
//! Identifiability note: the law/link pair has a gauge freedom — scaling all
//! `N_i` and `mu` together leaves accuracy unchanged — so `mu` is pinned to
//! 1 by default and the `N_i` absorb the scale. Likewise `k` is pinned to 0
//! unless explicitly freed, since a clean capability split needs no
//! independence constant. Both pins can be lifted via [`LawTemplate`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::law::search::search_boundary;
use crate::law::{FittedLaw, LawError, Link};
use crate::rng::{hash_str, SplitMix64};
use crate::types::{CombinationLaw, DifficultyVector, Dim, LawTerm};

// ---------------------------------------------------------------------------
// Binning
// ---------------------------------------------------------------------------

/// How a dimension's axis is divided, and therefore where a bin's
/// representative point sits (arithmetic midpoint for linear axes, geometric
/// mean for logarithmic ones).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Linear,
    Log,
}

/// Bin edges along one difficulty dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimBinning {
    pub dim: String,
    pub scale: Scale,
    /// Strictly increasing; values land in `[e_j, e_{j+1})`, the last bin
    /// closed on the right. Values outside the range are dropped.
    pub edges: Vec<f64>,
}

impl DimBinning {
    /// `bins` equal-width intervals over `[lo, hi]`.
    pub fn linear(dim: &str, lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect();
        DimBinning {
            dim: dim.to_string(),
            scale: Scale::Linear,
            edges,
        }
    }

    /// `bins` equal-ratio intervals over `[lo, hi]` (both positive).
    pub fn log(dim: &str, lo: f64, hi: f64, bins: usize) -> Self {
        let (l, h) = (lo.ln(), hi.ln());
        let edges = (0..=bins)
            .map(|i| (l + (h - l) * i as f64 / bins as f64).exp())
            .collect();
        DimBinning {
            dim: dim.to_string(),
            scale: Scale::Log,
            edges,
        }
    }

    fn validate(&self) -> Result<(), LawError> {
        if self.edges.len() < 2 {
            return Err(LawError::DegenerateBinning(format!(
                "dimension {} has fewer than 2 edges",
                self.dim
            )));
        }
        if !self.edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(LawError::DegenerateBinning(format!(
                "dimension {} edges are not strictly increasing",
                self.dim
            )));
        }
        if self.scale == Scale::Log && self.edges[0] <= 0.0 {
            return Err(LawError::DegenerateBinning(format!(
                "dimension {} uses a log scale but has non-positive edges",
                self.dim
            )));
        }
        if Dim::parse(&self.dim).is_none() {
            return Err(LawError::DegenerateBinning(format!(
                "unknown dimension `{}`",
                self.dim
            )));
        }
        Ok(())
    }

    fn cell_of(&self, v: f64) -> Option<usize> {
        let last = *self.edges.last().unwrap();
        if v < self.edges[0] || v > last {
            return None;
        }
        if v == last {
            return Some(self.edges.len() - 2);
        }
        Some(self.edges.partition_point(|&e| e <= v) - 1)
    }

    fn rep(&self, cell: usize) -> f64 {
        let (lo, hi) = (self.edges[cell], self.edges[cell + 1]);
        match self.scale {
            Scale::Linear => 0.5 * (lo + hi),
            Scale::Log => (lo * hi).sqrt(),
        }
    }
}

/// Full binning specification: one [`DimBinning`] per dimension plus the
/// minimum trial count a cell needs to be retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub dims: Vec<DimBinning>,
    pub min_trials: u64,
}

impl Binning {
    pub fn new(dims: Vec<DimBinning>) -> Self {
        Binning {
            dims,
            min_trials: 5,
        }
    }
}

/// One retained cell of the surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBin {
    /// Per-dimension `(lo, hi)` interval box, in `dims` order.
    pub cell: Vec<(f64, f64)>,
    /// Per-dimension representative point used for fitting.
    pub rep: Vec<f64>,
    pub trials: u64,
    pub successes: u64,
}

impl SurfaceBin {
    pub fn acc(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }
}

/// Binned empirical accuracy over difficulty space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySurface {
    pub dims: Vec<String>,
    pub bins: Vec<SurfaceBin>,
}

/// Bin graded records into an accuracy surface. Records missing one of the
/// binning dimensions are an error; records outside the edge range are
/// silently dropped, as are cells with fewer than `min_trials` records.
pub fn bin_accuracy(
    records: &[(DifficultyVector, bool)],
    binning: &Binning,
) -> Result<AccuracySurface, LawError> {
    if records.is_empty() {
        return Err(LawError::EmptyInput);
    }
    if binning.dims.is_empty() {
        return Err(LawError::DegenerateBinning("no dimensions".to_string()));
    }
    for d in &binning.dims {
        d.validate()?;
    }
    let dims: Vec<Dim> = binning
        .dims
        .iter()
        .map(|d| Dim::parse(&d.dim).expect("validated above"))
        .collect();

    let mut cells: BTreeMap<Vec<usize>, (u64, u64)> = BTreeMap::new();
    'records: for (dv, correct) in records {
        let mut key = Vec::with_capacity(dims.len());
        for (dim, spec) in dims.iter().zip(&binning.dims) {
            let v = dv
                .get(*dim)
                .ok_or_else(|| LawError::MissingDim(spec.dim.clone()))?;
            match spec.cell_of(v) {
                Some(c) => key.push(c),
                None => continue 'records,
            }
        }
        let entry = cells.entry(key).or_insert((0, 0));
        entry.0 += 1;
        if *correct {
            entry.1 += 1;
        }
    }

    let min_trials = binning.min_trials.max(1);
    let bins = cells
        .into_iter()
        .filter(|(_, (t, _))| *t >= min_trials)
        .map(|(key, (trials, successes))| SurfaceBin {
            cell: key
                .iter()
                .zip(&binning.dims)
                .map(|(&c, d)| (d.edges[c], d.edges[c + 1]))
                .collect(),
            rep: key
                .iter()
                .zip(&binning.dims)
                .map(|(&c, d)| d.rep(c))
                .collect(),
            trials,
            successes,
        })
        .collect();

    Ok(AccuracySurface {
        dims: binning.dims.iter().map(|d| d.dim.clone()).collect(),
        bins,
    })
}

// ---------------------------------------------------------------------------
// Fit configuration
// ---------------------------------------------------------------------------

/// Loss functions for fitting.
///
/// `BernoulliNll` is the per-trial negative log-likelihood over every bin —
/// the default, using all of the surface. `RmseOnLevelSets` is a
/// trials-weighted RMSE whose weights emphasize bins near the 90% and 10%
/// levels (triangular kernel of half-width 0.25 with a 0.05 floor), for when
/// the frontier matters more than the interior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BernoulliNll,
    RmseOnLevelSets,
}

/// Optimizer configuration. The only optimizer is multistart Nelder-Mead:
/// restart 0 starts from a neutral point (all N = 1, b one unit below the
/// smallest observed coordinate, gamma = 1), the rest from seeded
/// perturbations of it; the lowest training loss wins, earliest restart
/// breaking ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub dev_fraction: f64,
    pub restarts: u32,
    pub loss: LossKind,
    pub seed: u64,
    /// Per-restart simplex iteration cap; 0 means 400 per free parameter.
    pub max_iters: u32,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            dev_fraction: 0.20,
            restarts: 16,
            loss: LossKind::BernoulliNll,
            seed: 0,
            max_iters: 0,
        }
    }
}

/// Which law to fit: term names (one per surface dimension, any order) and
/// whether to free the gauge-pinned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawTemplate {
    pub terms: Vec<String>,
    /// Free the link scale `mu` (default pinned to 1; the N_i carry scale).
    pub fit_mu: bool,
    /// Free the independence constant `k` (default pinned to 0).
    pub fit_k: bool,
}

impl LawTemplate {
    pub fn new(terms: &[&str]) -> Self {
        LawTemplate {
            terms: terms.iter().map(|s| s.to_string()).collect(),
            fit_mu: false,
            fit_k: false,
        }
    }

    /// Two-term arithmetic law: calculation and planning.
    pub fn cot2() -> Self {
        Self::new(&["max_calc", "plan_steps"])
    }

    /// Two-term multi-hop law: entities per hop and hop count.
    pub fn multihop2() -> Self {
        Self::new(&["entities", "hops"])
    }

    /// Three-term multilingual law: calculation, planning, language ease.
    pub fn mgsm3() -> Self {
        Self::new(&["max_calc", "plan_steps", "lang_ease"])
    }
}

// ---------------------------------------------------------------------------
// Parameter coding
// ---------------------------------------------------------------------------

const LN_N_MIN: f64 = -13.815510557964274; // ln 1e-6
const LN_N_MAX: f64 = 13.815510557964274; // ln 1e6
const LN_GAMMA_MIN: f64 = -4.605170185988091; // ln 0.01
const LN_GAMMA_MAX: f64 = 6.907755278982137; // ln 1e3
const LN_W_MIN: f64 = -30.0;
const FTOL: f64 = 1e-10;
const BAD: f64 = 1e18;

/// Free-parameter layout: `[ln N_0.., w_0.., ln gamma, (ln mu), (ln k)]`
/// where `b_i = min_rep_i - exp(w_i)` keeps every offset strictly below the
/// smallest observed coordinate (so every bin stays evaluable), and the log
/// codings keep scales positive.
struct Coding {
    n_terms: usize,
    fit_mu: bool,
    fit_k: bool,
    min_reps: Vec<f64>,
}

struct Decoded {
    n: Vec<f64>,
    b: Vec<f64>,
    gamma: f64,
    mu: f64,
    k: f64,
}

impl Coding {
    fn len(&self) -> usize {
        2 * self.n_terms + 1 + usize::from(self.fit_mu) + usize::from(self.fit_k)
    }

    fn base_point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        if self.fit_k {
            *x.last_mut().unwrap() = -4.6; // k starts near 0.01
        }
        x
    }

    fn perturb(&self, x: &mut [f64], rng: &mut SplitMix64) {
        let t = self.n_terms;
        for v in &mut x[..t] {
            *v += rng.range_f64(-2.0, 2.0); // ln N
        }
        for v in &mut x[t..2 * t] {
            *v += rng.range_f64(-2.0, 2.0); // w
        }
        x[2 * t] += rng.range_f64(-1.5, 1.5); // ln gamma
        let mut i = 2 * t + 1;
        if self.fit_mu {
            x[i] += rng.range_f64(-1.0, 1.0);
            i += 1;
        }
        if self.fit_k {
            x[i] += rng.range_f64(-2.0, 2.0);
        }
    }

    fn decode(&self, x: &[f64]) -> Option<Decoded> {
        let t = self.n_terms;
        let mut n = Vec::with_capacity(t);
        for &ln_n in &x[..t] {
            if !(LN_N_MIN..=LN_N_MAX).contains(&ln_n) {
                return None;
            }
            n.push(ln_n.exp());
        }
        let mut b = Vec::with_capacity(t);
        for (i, &w) in x[t..2 * t].iter().enumerate() {
            if !(LN_W_MIN..=LN_N_MAX).contains(&w) {
                return None;
            }
            b.push(self.min_reps[i] - w.exp());
        }
        let ln_gamma = x[2 * t];
        if !(LN_GAMMA_MIN..=LN_GAMMA_MAX).contains(&ln_gamma) {
            return None;
        }
        let mut i = 2 * t + 1;
        let mu = if self.fit_mu {
            let ln_mu = x[i];
            i += 1;
            if !(LN_N_MIN..=LN_N_MAX).contains(&ln_mu) {
                return None;
            }
            ln_mu.exp()
        } else {
            1.0
        };
        let k = if self.fit_k {
            let ln_k = x[i];
            if !(LN_W_MIN..=LN_N_MAX).contains(&ln_k) {
                return None;
            }
            ln_k.exp()
        } else {
            0.0
        };
        Some(Decoded {
            n,
            b,
            gamma: ln_gamma.exp(),
            mu,
            k,
        })
    }
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Triangular emphasis on the 90%/10% level sets with a small floor so
/// interior bins still anchor the fit.
fn level_set_weight(acc: f64) -> f64 {
    let tri = |c: f64| (1.0 - (acc - c).abs() / 0.25).max(0.0);
    tri(0.9).max(tri(0.1)).max(0.05)
}

/// Predicted accuracy at one bin's representative point. `rep_idx[i]` maps
/// term `i` to its position in the bin's `rep` vector.
fn predict(d: &Decoded, rep: &[f64], rep_idx: &[usize]) -> f64 {
    let t = d.n.len();
    let factor = if t <= 1 { 1.0 } else { (t - 1) as f64 };
    let mut sum = 0.0;
    for i in 0..t {
        sum += d.n[i] / (rep[rep_idx[i]] - d.b[i]);
    }
    let e = 1.0 / (factor * sum + d.k);
    (1.0 / (1.0 + (e / d.mu).powf(d.gamma))).clamp(1e-12, 1.0 - 1e-12)
}

fn loss_on(bins: &[&SurfaceBin], d: &Decoded, rep_idx: &[usize], kind: LossKind) -> f64 {
    match kind {
        LossKind::BernoulliNll => {
            let mut nll = 0.0;
            let mut trials = 0u64;
            for bin in bins {
                let p = predict(d, &bin.rep, rep_idx);
                let s = bin.successes as f64;
                let f = (bin.trials - bin.successes) as f64;
                nll -= s * p.ln() + f * (1.0 - p).ln();
                trials += bin.trials;
            }
            nll / trials as f64
        }
        LossKind::RmseOnLevelSets => {
            let mut num = 0.0;
            let mut den = 0.0;
            for bin in bins {
                let p = predict(d, &bin.rep, rep_idx);
                let a = bin.acc();
                let w = level_set_weight(a) * bin.trials as f64;
                num += w * (p - a) * (p - a);
                den += w;
            }
            (num / den).sqrt()
        }
    }
}

// ---------------------------------------------------------------------------
// Nelder-Mead
// ---------------------------------------------------------------------------

/// Plain Nelder-Mead simplex (reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5). Returns the best point, its value, and whether the simplex
/// spread fell under `FTOL` before the iteration cap.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    init_step: f64,
    max_iters: u32,
) -> (Vec<f64>, f64, bool) {
    let dim = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..dim {
        let mut x = x0.to_vec();
        x[i] += init_step;
        let fx = f(&x);
        simplex.push((x, fx));
    }

    let mut converged = false;
    for _ in 0..max_iters {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("loss is never NaN"));
        if simplex[dim].1 - simplex[0].1 < FTOL {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..dim)
            .map(|j| simplex[..dim].iter().map(|(x, _)| x[j]).sum::<f64>() / dim as f64)
            .collect();
        let worst = simplex[dim].0.clone();
        let at = |scale: f64| -> Vec<f64> {
            (0..dim)
                .map(|j| centroid[j] + scale * (centroid[j] - worst[j]))
                .collect()
        };

        let xr = at(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = at(2.0);
            let fe = f(&xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else if fr < simplex[dim].1 {
            let xc = at(0.5);
            let fc = f(&xc);
            if fc <= fr {
                simplex[dim] = (xc, fc);
            } else {
                shrink(&mut simplex, f);
            }
        } else {
            let xc = at(-0.5);
            let fc = f(&xc);
            if fc < simplex[dim].1 {
                simplex[dim] = (xc, fc);
            } else {
                shrink(&mut simplex, f);
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("loss is never NaN"));
    let (best, fbest) = simplex.swap_remove(0);
    (best, fbest, converged)
}

fn shrink<F: Fn(&[f64]) -> f64>(simplex: &mut [(Vec<f64>, f64)], f: &F) {
    let best = simplex[0].0.clone();
    for entry in simplex.iter_mut().skip(1) {
        for (xj, bj) in entry.0.iter_mut().zip(&best) {
            *xj = bj + 0.5 * (*xj - bj);
        }
        entry.1 = f(&entry.0);
    }
}

// ---------------------------------------------------------------------------
// fit_law
// ---------------------------------------------------------------------------

/// Deterministic dev/train split: bin indices are shuffled by the seed and
/// the first `ceil(dev_fraction * bins)` become the dev set.
pub fn dev_split_indices(n_bins: usize, dev_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    assert!(
        dev_fraction > 0.0 && dev_fraction < 1.0,
        "dev_fraction must lie in (0, 1)"
    );
    let mut idx: Vec<usize> = (0..n_bins).collect();
    let mut rng = SplitMix64::keyed(&[seed, hash_str("dev-split")]);
    rng.shuffle(&mut idx);
    let n_dev = (dev_fraction * n_bins as f64).ceil() as usize;
    let dev = idx[..n_dev].to_vec();
    let train = idx[n_dev..].to_vec();
    (dev, train)
}

/// Fit the combination law and accuracy link to a surface.
///
/// Free parameters: one `(N_i, b_i)` pair per template term plus the link
/// exponent, with `mu`/`k` optionally freed. Requires at least 3 bins per
/// free parameter. The fit is deterministic for a given surface and config.
pub fn fit_law(
    surface: &AccuracySurface,
    template: &LawTemplate,
    cfg: &FitConfig,
) -> Result<FittedLaw, LawError> {
    // Template terms must name the surface dims (any order).
    if template.terms.len() != surface.dims.len() {
        return Err(LawError::WrongArity {
            expected: surface.dims.len(),
            got: template.terms.len(),
        });
    }
    let rep_idx: Vec<usize> = template
        .terms
        .iter()
        .map(|t| {
            surface
                .dims
                .iter()
                .position(|d| d == t)
                .ok_or_else(|| LawError::UnknownTerm(t.clone()))
        })
        .collect::<Result<_, _>>()?;

    let coding = Coding {
        n_terms: template.terms.len(),
        fit_mu: template.fit_mu,
        fit_k: template.fit_k,
        min_reps: rep_idx
            .iter()
            .map(|&ri| {
                surface
                    .bins
                    .iter()
                    .map(|b| b.rep[ri])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
    };
    let free = coding.len();
    let needed = 3 * free;
    if surface.bins.len() < needed {
        return Err(LawError::InsufficientData {
            bins: surface.bins.len(),
            free,
            needed,
        });
    }

    let (dev_idx, train_idx) = dev_split_indices(surface.bins.len(), cfg.dev_fraction, cfg.seed);
    let train: Vec<&SurfaceBin> = train_idx.iter().map(|&i| &surface.bins[i]).collect();
    let dev: Vec<&SurfaceBin> = dev_idx.iter().map(|&i| &surface.bins[i]).collect();

    let objective = |x: &[f64]| -> f64 {
        match coding.decode(x) {
            Some(d) => loss_on(&train, &d, &rep_idx, cfg.loss),
            None => BAD,
        }
    };

    let max_iters = if cfg.max_iters == 0 {
        400 * free as u32
    } else {
        cfg.max_iters
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for r in 0..cfg.restarts.max(1) {
        let mut x0 = coding.base_point();
        if r > 0 {
            let mut rng = SplitMix64::keyed(&[cfg.seed, hash_str("restart"), r as u64]);
            coding.perturb(&mut x0, &mut rng);
        }
        let (x, fx, conv) = nelder_mead(&objective, &x0, 0.5, max_iters);
        any_converged |= conv;
        if best.as_ref().is_none_or(|(_, fb)| fx < *fb) {
            best = Some((x, fx));
        }
    }
    if !any_converged {
        return Err(LawError::NonConvergence);
    }
    // Polish the winner with a tight simplex.
    let (bx, bf) = best.expect("restarts >= 1");
    let (px, pf, _) = nelder_mead(&objective, &bx, 0.05, max_iters);
    let (bx, bf) = if pf < bf { (px, pf) } else { (bx, bf) };

    let d = coding.decode(&bx).expect("winner is in bounds");
    let law = CombinationLaw::new(
        template
            .terms
            .iter()
            .zip(d.n.iter().zip(&d.b))
            .map(|(name, (&n, &b))| LawTerm {
                name: name.clone(),
                n,
                b,
            })
            .collect(),
        d.k,
    );
    let link = Link::new(d.gamma, d.mu);

    // Locate the two level boundaries on the combined axis by bisection,
    // bracketing around the link's closed-form inverse.
    let mut boundaries = BTreeMap::new();
    for level in [0.90, 0.10] {
        let center = link.boundary_for(level)?;
        let est = search_boundary(
            |e| link.acc(e),
            level,
            "combined",
            &DifficultyVector::new(),
            (0.5 * center, 2.0 * center),
            1e-9 * center,
        )?;
        boundaries.insert(format!("{level:.2}"), est);
    }

    let dev_loss = loss_on(&dev, &d, &rep_idx, cfg.loss);
    Ok(FittedLaw {
        law,
        link,
        boundaries,
        fit_loss: bf,
        dev_loss,
        seed: cfg.seed,
    })
}

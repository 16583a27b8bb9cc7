//! Grid-density representation of conditional return distributions and the
//! exact distributional Bellman operator, used as a ground-truth oracle on
//! small MDPs.
//!
//! One operator sweep maps each (s, a) density through
//!
//! ```text
//! new(eta | s, a) = (1/g) sum_{s'} p_T(s'|s,a) int p_R(r|s,a,s')
//!                      sum_{a'} pi(a'|s') old((eta - r)/g | s', a') dr
//! ```
//!
//! evaluated at bin centers with linear interpolation for the change of
//! variables, then renormalized. Deterministic rewards contribute a pure
//! shift; gamma and Student-t rewards are integrated by fixed-node
//! quadrature over a support covering all but 1e-8 of the reward mass (the
//! heavy Student-t tail forces an explicit, recorded truncation).

use crate::agent::FrozenPolicy;
use crate::density::DensityParams;
use crate::error::{Error, Result};
use crate::mdp::{RewardSpec, TabularMdp};
use crate::quad::gauss_legendre;

/// Discretized probability density on a uniform grid; bin values are masses
/// (they sum to one).
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    mass: Vec<f64>,
}

impl GridDensity {
    pub fn zeros(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if hi <= lo || n_bins < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid [{lo}, {hi}] with {n_bins} bins"
            )));
        }
        Ok(GridDensity {
            lo,
            hi,
            mass: vec![0.0; n_bins],
        })
    }

    /// All mass in the bin containing x.
    pub fn point_mass(lo: f64, hi: f64, n_bins: usize, x: f64) -> Result<Self> {
        let mut density = Self::zeros(lo, hi, n_bins)?;
        if !(x >= lo && x <= hi) {
            return Err(Error::InvalidParameter(format!(
                "point {x} outside [{lo}, {hi}]"
            )));
        }
        let i = (((x - lo) / density.bin_width()) as usize).min(n_bins - 1);
        density.mass[i] = 1.0;
        Ok(density)
    }

    /// Discretize a pdf by evaluating it at bin centers and renormalizing.
    pub fn from_pdf<F: Fn(f64) -> f64>(lo: f64, hi: f64, n_bins: usize, pdf: F) -> Result<Self> {
        let mut density = Self::zeros(lo, hi, n_bins)?;
        let width = density.bin_width();
        for i in 0..n_bins {
            density.mass[i] = pdf(density.bin_center(i)).max(0.0) * width;
        }
        density.renormalize();
        Ok(density)
    }

    pub fn n_bins(&self) -> usize {
        self.mass.len()
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins() as f64
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.bin_width()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn renormalize(&mut self) {
        let total = self.total_mass();
        if total > 0.0 {
            for m in self.mass.iter_mut() {
                *m /= total;
            }
        }
    }

    /// Density value at y by linear interpolation between bin centers
    /// (zero outside the grid).
    pub fn density_at(&self, y: f64) -> f64 {
        let width = self.bin_width();
        let pos = (y - self.lo) / width - 0.5;
        if pos <= -1.0 || pos >= self.n_bins() as f64 {
            return 0.0;
        }
        let i = pos.floor();
        let frac = pos - i;
        let i = i as isize;
        let value_at = |j: isize| -> f64 {
            if j < 0 || j >= self.n_bins() as isize {
                0.0
            } else {
                self.mass[j as usize] / width
            }
        };
        value_at(i) * (1.0 - frac) + value_at(i + 1) * frac
    }
}

/// One shared-grid density per (state, action).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalGridTable {
    n_states: usize,
    n_actions: usize,
    entries: Vec<GridDensity>,
}

impl ConditionalGridTable {
    /// Every entry a point mass at x.
    pub fn point_mass(
        n_states: usize,
        n_actions: usize,
        lo: f64,
        hi: f64,
        n_bins: usize,
        x: f64,
    ) -> Result<Self> {
        let proto = GridDensity::point_mass(lo, hi, n_bins, x)?;
        Ok(ConditionalGridTable {
            n_states,
            n_actions,
            entries: vec![proto; n_states * n_actions],
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, state: usize, action: usize) -> &GridDensity {
        &self.entries[state * self.n_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, density: GridDensity) {
        self.entries[state * self.n_actions + action] = density;
    }

    /// Delimiter-separated rows (s, a, bin_center, mass) for plotting.
    pub fn to_rows(&self) -> String {
        let mut out = String::from("s,a,bin_center,mass\n");
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let d = self.get(s, a);
                for i in 0..d.n_bins() {
                    out.push_str(&format!(
                        "{s},{a},{:.16e},{:.16e}\n",
                        d.bin_center(i),
                        d.mass()[i]
                    ));
                }
            }
        }
        out
    }
}

/// Reward integration nodes (value, weight); weights sum to ~1.
fn reward_nodes(spec: &RewardSpec) -> Result<Vec<(f64, f64)>> {
    const MASS_TOL: f64 = 1e-8;
    match spec {
        RewardSpec::Deterministic(v) => Ok(vec![(*v, 1.0)]),
        RewardSpec::NegativeGamma { shape, scale } => {
            // support (-R, 0); panels graded geometrically toward the
            // (integrable) singularity at 0 when shape < 1
            let (nodes, weights) = gauss_legendre(16);
            let mut cutoff = shape * scale * 4.0;
            loop {
                let mass = gamma_upper_mass(spec, cutoff);
                if mass < MASS_TOL || cutoff > 1e12 {
                    break;
                }
                cutoff *= 2.0;
            }
            let mut edges = vec![0.0];
            let mut e = cutoff * 2f64.powi(-40);
            while e < cutoff {
                edges.push(e);
                e *= 2.0;
            }
            edges.push(cutoff);
            let mut out = Vec::new();
            for pair in edges.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                for (x, w) in nodes.iter().zip(weights.iter()) {
                    let r = -(mid + half * x);
                    out.push((r, w * half * spec.pdf(r).unwrap()));
                }
            }
            Ok(out)
        }
        RewardSpec::ShiftedStudentT {
            scale, location, ..
        } => {
            // symmetric polynomial tail: geometric panels out to the 1e-8
            // mass cutoff (wide for dof near 1; the truncation is recorded
            // by the caller via the node range)
            let (nodes, weights) = gauss_legendre(16);
            let mut cutoff = 4.0;
            loop {
                let tail = t_tail_mass(spec, cutoff);
                if tail < MASS_TOL / 2.0 || cutoff > 1e9 {
                    break;
                }
                cutoff *= 2.0;
            }
            let mut edges = vec![0.0, 0.5, 1.0];
            let mut e = 2.0;
            while e < cutoff {
                edges.push(e);
                e *= 2.0;
            }
            edges.push(cutoff);
            let mut out = Vec::new();
            for pair in edges.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                for (x, w) in nodes.iter().zip(weights.iter()) {
                    for sign in [-1.0, 1.0] {
                        let t = sign * (mid + half * x);
                        let r = location + scale * t;
                        out.push((r, w * half * scale * spec.pdf(r).unwrap()));
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Upper-tail mass of the negative-gamma magnitude beyond `cutoff`,
/// estimated by a coarse quadrature.
fn gamma_upper_mass(spec: &RewardSpec, cutoff: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(32);
    let mut total = 0.0;
    let mut a = cutoff;
    for _ in 0..60 {
        let b = a * 2.0;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut seg = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            seg += w * half * spec.pdf(-(mid + half * x)).unwrap();
        }
        total += seg;
        if seg < 1e-16 {
            break;
        }
        a = b;
    }
    total
}

fn t_tail_mass(spec: &RewardSpec, cutoff: f64) -> f64 {
    let (dof, scale, location) = match spec {
        RewardSpec::ShiftedStudentT {
            dof,
            scale,
            location,
        } => (*dof, *scale, *location),
        _ => unreachable!(),
    };
    // survival of |T| > cutoff for standard t: integrate the density outward
    let (nodes, weights) = gauss_legendre(32);
    let mut total = 0.0;
    let mut a = cutoff;
    for _ in 0..120 {
        let b = a * 2.0;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut seg = 0.0;
        for (x, w) in nodes.iter().zip(weights.iter()) {
            let t = mid + half * x;
            seg += w * half * scale * spec.pdf(location + scale * t).unwrap();
        }
        total += 2.0 * seg;
        if seg / (total + 1e-300) < 1e-10 && a > cutoff * 8.0 {
            break;
        }
        let _ = dof;
        a = b;
    }
    total
}

/// One sweep of the distributional Bellman operator.
pub fn apply_bellman_operator(
    table: &ConditionalGridTable,
    mdp: &TabularMdp,
    policy: &FrozenPolicy,
) -> Result<ConditionalGridTable> {
    let gamma = mdp.discount();
    if gamma <= 0.0 {
        return Err(Error::InvalidParameter(
            "distributional operator requires discount strictly inside (0, 1)".into(),
        ));
    }
    if table.n_states != mdp.n_states() || table.n_actions != mdp.n_actions() {
        return Err(Error::InvalidParameter(
            "grid table does not match the MDP".into(),
        ));
    }
    let proto = table.get(0, 0);
    let (lo, hi, n_bins) = (proto.lo(), proto.hi(), proto.n_bins());
    let width = proto.bin_width();

    let mut out = table.clone();
    let mut reward_lo = f64::INFINITY;
    let mut reward_hi = f64::NEG_INFINITY;

    // each source bin's mass lands at eta = r + gamma * y and is split
    // linearly between the two nearest destination bin centers; this
    // conserves mass and first moments exactly, and anything landing
    // outside the grid is counted as escaped
    let deposit = |masses: &mut [f64], escaped: &mut f64, eta: f64, mass: f64| {
        if eta < lo || eta > hi {
            *escaped += mass;
            return;
        }
        let pos = (eta - lo) / width - 0.5;
        if pos <= 0.0 {
            masses[0] += mass;
        } else if pos >= (n_bins - 1) as f64 {
            masses[n_bins - 1] += mass;
        } else {
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            masses[i] += mass * (1.0 - frac);
            masses[i + 1] += mass * frac;
        }
    };

    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let mut masses = vec![0.0; n_bins];
            let mut escaped = 0.0;
            for s_next in 0..mdp.n_states() {
                let p_t = mdp.transition_prob(s, a, s_next)?;
                if p_t == 0.0 {
                    continue;
                }
                let probs = policy.probs(s_next);
                let nodes = reward_nodes(mdp.reward_spec(s, a, s_next)?)?;
                for &(r, w) in &nodes {
                    reward_lo = reward_lo.min(r);
                    reward_hi = reward_hi.max(r);
                    for (a_next, &pi) in probs.iter().enumerate() {
                        let coeff = p_t * w * pi;
                        if coeff == 0.0 {
                            continue;
                        }
                        let src = table.get(s_next, a_next);
                        for (j, m) in src.mass().iter().enumerate() {
                            if *m > 0.0 {
                                deposit(
                                    &mut masses,
                                    &mut escaped,
                                    r + gamma * src.bin_center(j),
                                    coeff * m,
                                );
                            }
                        }
                    }
                }
            }
            if escaped > 1e-6 {
                return Err(Error::SupportOverflow {
                    escaped,
                    lo,
                    hi,
                    need_lo: reward_lo + gamma * lo,
                    need_hi: reward_hi + gamma * hi,
                });
            }
            let mut density = GridDensity::zeros(lo, hi, n_bins)?;
            density.mass.copy_from_slice(&masses);
            density.renormalize();
            out.set(s, a, density);
        }
    }
    Ok(out)
}

/// Iterate the operator to its fixed point. Returns the converged table and
/// the number of sweeps used.
pub fn iterate_to_fixed_point(
    mdp: &TabularMdp,
    policy: &FrozenPolicy,
    lo: f64,
    hi: f64,
    n_bins: usize,
    tol: f64,
) -> Result<(ConditionalGridTable, usize)> {
    let gamma = mdp.discount();
    if gamma <= 0.0 {
        return Err(Error::InvalidParameter(
            "discount must lie strictly inside (0, 1)".into(),
        ));
    }
    // changes contract at rate gamma from at most 1; atomic (single-spike)
    // solutions drift sub-bin for an extra log(n_bins)/|log gamma| sweeps
    let max_iters = (tol.ln() / gamma.ln()).ceil() as usize
        + ((n_bins as f64).ln() / -gamma.ln()).ceil() as usize
        + 5;
    let start = if lo <= 0.0 && hi >= 0.0 {
        0.0
    } else {
        0.5 * (lo + hi)
    };
    let mut table =
        ConditionalGridTable::point_mass(mdp.n_states(), mdp.n_actions(), lo, hi, n_bins, start)?;
    for iter in 1..=max_iters {
        let next = apply_bellman_operator(&table, mdp, policy)?;
        let mut change: f64 = 0.0;
        for s in 0..table.n_states {
            for a in 0..table.n_actions {
                for (m0, m1) in table.get(s, a).mass().iter().zip(next.get(s, a).mass()) {
                    change = change.max((m0 - m1).abs());
                }
            }
        }
        table = next;
        if change < tol {
            return Ok((table, iter));
        }
    }
    Err(Error::BellmanNonConvergence {
        max_iters,
        residual: f64::NAN,
    })
}

/// Midpoint-rule moments and interpolated quantiles of a grid density.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStats {
    pub mean: f64,
    pub variance: f64,
    pub quantiles: Vec<(f64, f64)>,
}

pub fn grid_stats(density: &GridDensity, quantiles: &[f64]) -> Result<GridStats> {
    let mut mean = 0.0;
    for (i, m) in density.mass().iter().enumerate() {
        mean += m * density.bin_center(i);
    }
    let mut variance = 0.0;
    for (i, m) in density.mass().iter().enumerate() {
        let d = density.bin_center(i) - mean;
        variance += m * d * d;
    }
    let width = density.bin_width();
    let mut out = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::QuantileOutOfRange(q));
        }
        let mut cum = 0.0;
        let mut value = density.hi();
        for (i, m) in density.mass().iter().enumerate() {
            if cum + m >= q {
                let left = density.bin_center(i) - 0.5 * width;
                let frac = if *m > 0.0 { (q - cum) / m } else { 0.0 };
                value = left + frac * width;
                break;
            }
            cum += m;
        }
        out.push((q, value));
    }
    Ok(GridStats {
        mean,
        variance,
        quantiles: out,
    })
}

/// KL divergence from a grid density to a parametric model, up to the grid
/// discretization: sum of mass * log(mass / (pdf * width)).
pub fn kl_to_model(density: &GridDensity, params: &DensityParams) -> f64 {
    let width = density.bin_width();
    let mut kl = 0.0;
    for (i, m) in density.mass().iter().enumerate() {
        if *m > 0.0 {
            kl += m * (m / (params.pdf(density.bin_center(i)) * width)).ln();
        }
    }
    kl
}

/// Exact expected returns Q^pi(s, a) from the linear Bellman system, used as
/// an independent check of the grid fixed point's means.
pub fn expected_q_values(mdp: &TabularMdp, policy: &FrozenPolicy) -> Result<Vec<f64>> {
    let n_states = mdp.n_states();
    let n_actions = mdp.n_actions();
    let n = n_states * n_actions;
    let gamma = mdp.discount();
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for s in 0..n_states {
        for act in 0..n_actions {
            let row = s * n_actions + act;
            a[row * n + row] += 1.0;
            let mut mean_reward = 0.0;
            for s_next in 0..n_states {
                let p = mdp.transition_prob(s, act, s_next)?;
                if p == 0.0 {
                    continue;
                }
                mean_reward += p * mdp.reward_spec(s, act, s_next)?.mean();
                for (a_next, &pi) in policy.probs(s_next).iter().enumerate() {
                    if pi > 0.0 {
                        a[row * n + s_next * n_actions + a_next] -= gamma * p * pi;
                    }
                }
            }
            b[row] = mean_reward;
        }
    }
    crate::linalg::solve_in_place(&mut a, &mut b, n);
    Ok(b)
}

//! Stochastic natural-gradient TD updates for the return-density models.
//!
//! A single observed transition (r, s') turns the successor-state density
//! into a sample-based target: the pushforward of the successor model
//! through eta = r + gamma * eta'. Each update moves the current model's
//! parameters along the natural gradient (Fisher-preconditioned gradient)
//! of the KL divergence from that pushforward target, scaled by
//! `learning_rate / discount`.
//!
//! Closed-form rules are provided for all three families. They are exact:
//! every rule is certified against [`ng_update_numeric`], which evaluates
//! the defining integral (and the Fisher matrix) by adaptive quadrature and
//! serves as the independent oracle. The Gaussian central-parameter rule
//! `mu += (alpha/gamma) * delta` coincides with tabular TD(0) at rate
//! alpha/gamma, which is what makes the Gaussian learner a strict extension
//! of classical TD.

use crate::density::{
    DensityParams, FisherMatrix, GaussianParams, Gradient, LaplaceParams, ParamTable,
    SkewedLaplaceParams,
};
use crate::error::{Error, Result};
use crate::quad::integrate_adaptive;

/// One update's worth of context: the observed reward, the current model at
/// (s, a), and the successor target density as a weighted mixture (a single
/// entry for Q-learning-type targets, one entry per action for SARSA-type).
#[derive(Debug, Clone, PartialEq)]
pub struct TdContext {
    reward: f64,
    discount: f64,
    learning_rate: f64,
    current: DensityParams,
    target: Vec<(f64, DensityParams)>,
}

impl TdContext {
    pub fn new(
        reward: f64,
        discount: f64,
        learning_rate: f64,
        current: DensityParams,
        target: Vec<(f64, DensityParams)>,
    ) -> Result<Self> {
        if !reward.is_finite() {
            return Err(Error::InvalidParameter(format!("reward = {reward}")));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "discount = {discount} must lie in (0, 1)"
            )));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate = {learning_rate}"
            )));
        }
        if target.is_empty() {
            return Err(Error::InvalidParameter("empty target mixture".into()));
        }
        let mut total = 0.0;
        for (w, params) in &target {
            if !(*w >= 0.0 && *w <= 1.0) {
                return Err(Error::BadProbabilities(format!("target weight {w}")));
            }
            if params.kind() != current.kind() {
                return Err(Error::ModelMismatch {
                    expected: current.kind().name(),
                    got: params.kind().name(),
                });
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadProbabilities(format!(
                "target weights sum to {total}"
            )));
        }
        Ok(TdContext {
            reward,
            discount,
            learning_rate,
            current,
            target,
        })
    }

    /// Convenience constructor for a single-component target.
    pub fn single(
        reward: f64,
        discount: f64,
        learning_rate: f64,
        current: DensityParams,
        target: DensityParams,
    ) -> Result<Self> {
        TdContext::new(
            reward,
            discount,
            learning_rate,
            current,
            vec![(1.0, target)],
        )
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn current(&self) -> &DensityParams {
        &self.current
    }

    pub fn target(&self) -> &[(f64, DensityParams)] {
        &self.target
    }

    fn single_target(&self) -> Result<&DensityParams> {
        if self.target.len() != 1 {
            return Err(Error::InvalidParameter(format!(
                "expected a single-component target, got {}",
                self.target.len()
            )));
        }
        Ok(&self.target[0].1)
    }
}

/// The temporal difference: reward + discount * target_central - current_central.
pub fn td_delta(current_central: f64, target_central: f64, reward: f64, discount: f64) -> f64 {
    reward + discount * target_central - current_central
}

/// Natural-gradient increment (the update with alpha/gamma set to 1) for a
/// single-component target, as a function of the temporal difference.
///
/// The central parameters of current and target enter only through `delta`.
pub fn closed_increment_from_delta(
    current: &DensityParams,
    target: &DensityParams,
    delta: f64,
    discount: f64,
) -> Result<Gradient> {
    match (current, target) {
        (DensityParams::Gaussian(cur), DensityParams::Gaussian(tgt)) => {
            Ok(gaussian_increment(cur, tgt, delta, discount))
        }
        (DensityParams::Laplace(cur), DensityParams::Laplace(tgt)) => {
            Ok(laplace_increment(cur, tgt, delta, discount))
        }
        (DensityParams::SkewedLaplace(cur), DensityParams::SkewedLaplace(tgt)) => {
            Ok(skewed_increment(cur, tgt, delta, discount))
        }
        _ => Err(Error::ModelMismatch {
            expected: current.kind().name(),
            got: target.kind().name(),
        }),
    }
}

fn gaussian_increment(
    cur: &GaussianParams,
    tgt: &GaussianParams,
    delta: f64,
    discount: f64,
) -> Gradient {
    let sigma = cur.sigma();
    let gs = discount * tgt.sigma();
    Gradient::from_slice(&[
        delta,
        (delta * delta + gs * gs - sigma * sigma) / (2.0 * sigma),
    ])
}

fn laplace_increment(
    cur: &LaplaceParams,
    tgt: &LaplaceParams,
    delta: f64,
    discount: f64,
) -> Gradient {
    let b = cur.b();
    let gb = discount * tgt.b();
    let dm = if delta <= 0.0 {
        ((delta / gb).exp() - 1.0) * b
    } else {
        (1.0 - (-delta / gb).exp()) * b
    };
    let db = -b + delta.abs() + gb * (-delta.abs() / gb).exp();
    Gradient::from_slice(&[dm, db])
}

fn skewed_increment(
    cur: &SkewedLaplaceParams,
    tgt: &SkewedLaplaceParams,
    delta: f64,
    discount: f64,
) -> Gradient {
    let (b, c) = (cur.b(), cur.c());
    let gb = discount * tgt.b();
    let tc = tgt.c();
    let cc = c * (1.0 - c);

    // Moments of the pushforward target relative to the current central
    // parameter, all in units of the current scale b: p = P(eta < m),
    // s1m/s1p the one-sided first moments of (eta - m)/b, s1 their sum.
    // The target is a skewed Laplace centered at m + delta with scale gb
    // and skewness tc.
    let rb = gb / b;
    let s1 = delta / b + rb * (1.0 - 2.0 * tc) / (tc * (1.0 - tc));
    let (p, s1m, s1p);
    if delta > 0.0 {
        p = tc * (-(1.0 - tc) * delta / gb).exp();
        s1m = -p * rb / (1.0 - tc);
        s1p = s1 - s1m;
    } else {
        let upper = (1.0 - tc) * (tc * delta / gb).exp();
        p = 1.0 - upper;
        s1p = upper * rb / tc;
        s1m = s1 - s1p;
    }

    // Expected score u = diag(b, b, 1) * E[score]: working in these scaled
    // coordinates keeps every intermediate O(delta / b) and avoids squaring
    // b, since F = (1/b^2) D G D with D = diag(1, 1, b) and G a function of
    // c alone. The natural gradient is then (b y_m, b y_b, y_c) for
    // y = G^{-1} u.
    let um = c - p;
    let ub = -1.0 + c * s1p - (1.0 - c) * s1m;
    let uc = (1.0 - 2.0 * c) / cc - s1;

    let k = (2.0 * c - 1.0) / cc;
    let m_cc = (2.0 * c * c - 2.0 * c + 1.0) / (cc * cc);
    let mut g = [cc, 0.0, -1.0, 0.0, 1.0, k, -1.0, k, m_cc];
    let mut y = [um, ub, uc];
    crate::linalg::solve_in_place(&mut g, &mut y, 3);
    Gradient::from_slice(&[b * y[0], b * y[1], y[2]])
}

/// Weighted natural-gradient increment over the whole target mixture.
///
/// The KL gradient is linear in the target density and the Fisher matrix
/// depends only on the current parameters, so the mixture increment is the
/// probability-weighted sum of single-component increments.
pub fn mixture_increment(ctx: &TdContext) -> Result<Gradient> {
    let mut total = Gradient::zeros(ctx.current.dim());
    for (w, tgt) in &ctx.target {
        if *w == 0.0 {
            continue;
        }
        let delta = td_delta(
            ctx.current.central(),
            tgt.central(),
            ctx.reward,
            ctx.discount,
        );
        let incr = closed_increment_from_delta(&ctx.current, tgt, delta, ctx.discount)?;
        total.add_scaled(&incr, *w);
    }
    Ok(total)
}

fn apply_increment(
    current: &DensityParams,
    incr: &Gradient,
    learning_rate: f64,
    discount: f64,
) -> DensityParams {
    let coeff = learning_rate / discount;
    let comps = current.components();
    let mut out = [0.0; 3];
    for i in 0..current.dim() {
        out[i] = comps.get(i) + coeff * incr.get(i);
    }
    DensityParams::from_components_projected(current.kind(), &out[..current.dim()])
        .unwrap_or_else(|e| {
            panic!(
                "projection failed: {e}; current={current:?} incr={incr:?} lr={learning_rate} disc={discount}"
            )
        })
}

/// Closed-form natural-gradient update for any model kind and target mixture.
pub fn ng_update(ctx: &TdContext) -> Result<DensityParams> {
    let incr = mixture_increment(ctx)?;
    Ok(apply_increment(
        &ctx.current,
        &incr,
        ctx.learning_rate,
        ctx.discount,
    ))
}

/// Gaussian update: mu += (a/g) delta, sigma += (a/g)(delta^2 + g^2 sigma'^2 - sigma^2)/(2 sigma).
pub fn ng_update_gaussian(ctx: &TdContext) -> Result<GaussianParams> {
    let tgt = ctx.single_target()?;
    match ng_update_single(ctx, tgt)? {
        DensityParams::Gaussian(p) => Ok(p),
        _ => Err(Error::ModelMismatch {
            expected: "gaussian",
            got: ctx.current.kind().name(),
        }),
    }
}

/// Laplace update: the central parameter moves by at most (a/g) b in either
/// direction, which is what makes this learner robust to outlier rewards.
pub fn ng_update_laplace(ctx: &TdContext) -> Result<LaplaceParams> {
    let tgt = ctx.single_target()?;
    match ng_update_single(ctx, tgt)? {
        DensityParams::Laplace(p) => Ok(p),
        _ => Err(Error::ModelMismatch {
            expected: "laplace",
            got: ctx.current.kind().name(),
        }),
    }
}

/// Skewed-Laplace update: closed-form expected score solved through the
/// 3x3 Fisher matrix, branching on the sign of the temporal difference.
pub fn ng_update_skewed_laplace(ctx: &TdContext) -> Result<SkewedLaplaceParams> {
    let tgt = ctx.single_target()?;
    match ng_update_single(ctx, tgt)? {
        DensityParams::SkewedLaplace(p) => Ok(p),
        _ => Err(Error::ModelMismatch {
            expected: "skewed_laplace",
            got: ctx.current.kind().name(),
        }),
    }
}

fn ng_update_single(ctx: &TdContext, target: &DensityParams) -> Result<DensityParams> {
    let delta = td_delta(
        ctx.current.central(),
        target.central(),
        ctx.reward,
        ctx.discount,
    );
    let incr = closed_increment_from_delta(&ctx.current, target, delta, ctx.discount)?;
    Ok(apply_increment(
        &ctx.current,
        &incr,
        ctx.learning_rate,
        ctx.discount,
    ))
}

/// Q-learning-type target: the successor density at the greedy action,
/// where greedy means argmax of the q-quantile values (lowest action index
/// wins ties). Any policy monotone in those values selects the same action.
pub fn build_target_offpolicy(
    table: &ParamTable,
    next_state: usize,
    q: f64,
) -> Result<Vec<(f64, DensityParams)>> {
    let mut best_action = 0usize;
    let mut best_value = f64::NEG_INFINITY;
    for a in 0..table.n_actions() {
        let value = table.get(next_state, a)?.quantile(q)?;
        if value > best_value {
            best_value = value;
            best_action = a;
        }
    }
    Ok(vec![(1.0, *table.get(next_state, best_action)?)])
}

/// SARSA-type target: the policy mixture of successor densities.
pub fn build_target_onpolicy(
    table: &ParamTable,
    next_state: usize,
    policy_probs: &[f64],
) -> Result<Vec<(f64, DensityParams)>> {
    if policy_probs.len() != table.n_actions() {
        return Err(Error::BadProbabilities(format!(
            "expected {} action probabilities, got {}",
            table.n_actions(),
            policy_probs.len()
        )));
    }
    let total: f64 = policy_probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 || policy_probs.iter().any(|p| *p < 0.0) {
        return Err(Error::BadProbabilities(format!(
            "probabilities {policy_probs:?}"
        )));
    }
    let mut target = Vec::with_capacity(policy_probs.len());
    for (a, &w) in policy_probs.iter().enumerate() {
        target.push((w, *table.get(next_state, a)?));
    }
    Ok(target)
}

/// Settings for the quadrature oracle.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    /// Successive panel-doubling estimates must agree to this tolerance.
    pub tol: f64,
    pub max_refinements: usize,
    /// Support half-width in units of tail-decay lengths.
    pub tail_widths: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            tol: 1e-8,
            max_refinements: 22,
            tail_widths: 45.0,
        }
    }
}

struct OracleGeometry {
    pushed: Vec<(f64, DensityParams)>,
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
}

fn oracle_geometry(ctx: &TdContext, quad: &QuadratureConfig) -> OracleGeometry {
    let pushed: Vec<(f64, DensityParams)> = ctx
        .target
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, p)| (*w, p.pushforward(ctx.reward, ctx.discount)))
        .collect();
    let (mut lo, mut hi) = ctx.current.support_bounds(quad.tail_widths);
    let mut breaks = vec![ctx.current.central()];
    for (_, p) in &pushed {
        let (plo, phi) = p.support_bounds(quad.tail_widths);
        lo = lo.min(plo);
        hi = hi.max(phi);
        breaks.push(p.central());
    }
    OracleGeometry {
        pushed,
        lo,
        hi,
        breaks,
    }
}

/// Expected score of the current model under the normalized pushforward
/// target, each component by adaptive quadrature.
fn numeric_expected_score(ctx: &TdContext, quad: &QuadratureConfig) -> Result<Gradient> {
    let geom = oracle_geometry(ctx, quad);
    let dim = ctx.current.dim();
    let mut v = [0.0; 3];
    for i in 0..dim {
        v[i] = integrate_adaptive(
            &|eta: f64| {
                let g: f64 = geom.pushed.iter().map(|(w, p)| w * p.pdf(eta)).sum();
                g * ctx.current.score(eta).get(i)
            },
            geom.lo,
            geom.hi,
            &geom.breaks,
            quad.tol,
            quad.max_refinements,
        )?;
    }
    Ok(Gradient::from_slice(&v[..dim]))
}

/// Fisher information by quadrature of the expected score outer product;
/// the certification oracle for the closed-form matrices.
pub fn fisher_information_numeric(
    current: &DensityParams,
    quad: &QuadratureConfig,
) -> Result<FisherMatrix> {
    let (lo, hi) = current.support_bounds(quad.tail_widths);
    let breaks = [current.central()];
    let dim = current.dim();
    let mut rows = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in i..dim {
            let val = integrate_adaptive(
                &|x: f64| current.pdf(x) * current.score(x).get(i) * current.score(x).get(j),
                lo,
                hi,
                &breaks,
                quad.tol,
                quad.max_refinements,
            )?;
            rows[i][j] = val;
            rows[j][i] = val;
        }
    }
    let row_refs: Vec<&[f64]> = rows[..dim].iter().map(|r| &r[..dim]).collect();
    Ok(FisherMatrix::from_rows(&row_refs))
}

/// Quadrature implementation of the natural-gradient update: evaluates both
/// the expected score and the Fisher matrix numerically, so it shares no
/// closed-form expressions with the rules it certifies.
pub fn ng_update_numeric(ctx: &TdContext, quad: &QuadratureConfig) -> Result<DensityParams> {
    let incr = ng_increment_numeric(ctx, quad)?;
    Ok(apply_increment(
        &ctx.current,
        &incr,
        ctx.learning_rate,
        ctx.discount,
    ))
}

/// The numeric natural-gradient increment itself (alpha/gamma = 1).
pub fn ng_increment_numeric(ctx: &TdContext, quad: &QuadratureConfig) -> Result<Gradient> {
    let v = numeric_expected_score(ctx, quad)?;
    let fim = fisher_information_numeric(&ctx.current, quad)?;
    Ok(fim.solve(&v))
}

/// Ordinary-gradient variant (no Fisher preconditioning); exposed only as a
/// diagnostic for comparing against the natural-gradient path.
pub fn ordinary_update_numeric(ctx: &TdContext, quad: &QuadratureConfig) -> Result<DensityParams> {
    let v = numeric_expected_score(ctx, quad)?;
    Ok(apply_increment(
        &ctx.current,
        &v,
        ctx.learning_rate,
        ctx.discount,
    ))
}

/// One row of a natural-gradient response curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub delta: f64,
    pub ng: Gradient,
}

/// Tabulates the closed-form natural-gradient components (alpha/gamma = 1)
/// against the temporal difference, for plotting.
pub fn ng_curve(
    current: &DensityParams,
    target: &DensityParams,
    delta_lo: f64,
    delta_hi: f64,
    n_points: usize,
    discount: f64,
) -> Result<Vec<CurvePoint>> {
    if n_points < 2 {
        return Err(Error::InvalidParameter(
            "curve needs at least 2 points".into(),
        ));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::InvalidParameter(format!("discount = {discount}")));
    }
    let step = (delta_hi - delta_lo) / (n_points - 1) as f64;
    let mut out = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let delta = delta_lo + i as f64 * step;
        let ng = closed_increment_from_delta(current, target, delta, discount)?;
        out.push(CurvePoint { delta, ng });
    }
    Ok(out)
}

//! The three parametric return-density families: Gaussian, Laplace, and
//! skewed Laplace.
//!
//! Each family exposes log-density, cdf, quantile, the score (gradient of the
//! log-density in the parameters), the closed-form Fisher information matrix,
//! and inverse-transform sampling. The skewed Laplace density is
//!
//! ```text
//! p(x | m, b, c) = c(1-c)/b * exp( (1-c)(x-m)/b )   for x < m
//!                  c(1-c)/b * exp( -c(x-m)/b )      otherwise
//! ```
//!
//! so its central parameter `m` is the c-quantile, which is what makes the
//! family useful for quantile-criterion control.

use rand::Rng;
use rand_distr::{Distribution, Open01};
use statrs::function::erf::{erf, erf_inv};

use crate::error::{Error, Result};

/// Scale parameters (sigma, b) are clipped to this floor when gradient
/// updates are projected back into the valid set.
pub const SCALE_FLOOR: f64 = 1e-3;
/// Skewness projection interval.
pub const SKEW_MIN: f64 = 0.01;
pub const SKEW_MAX: f64 = 0.99;
/// Magnitude cap applied by the projection. Far beyond any attainable
/// return in these tasks; it exists so that divergent update sequences
/// under unbounded rewards saturate instead of overflowing to inf/NaN.
pub const PARAM_CAP: f64 = 1e12;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Gaussian,
    Laplace,
    SkewedLaplace,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Gaussian | ModelKind::Laplace => 2,
            ModelKind::SkewedLaplace => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Laplace => "laplace",
            ModelKind::SkewedLaplace => "skewed_laplace",
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::Gaussian => &["mu", "sigma"],
            ModelKind::Laplace => &["m", "b"],
            ModelKind::SkewedLaplace => &["m", "b", "c"],
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(ModelKind::Gaussian),
            "laplace" => Ok(ModelKind::Laplace),
            "skewed_laplace" | "skewed-laplace" => Ok(ModelKind::SkewedLaplace),
            other => Err(Error::Parse(format!("unknown model kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A parameter-space vector of dimension 2 or 3 (scores, gradients, updates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gradient {
    vals: [f64; 3],
    dim: usize,
}

impl Gradient {
    pub fn from_slice(vals: &[f64]) -> Self {
        assert!(vals.len() == 2 || vals.len() == 3);
        let mut buf = [0.0; 3];
        buf[..vals.len()].copy_from_slice(vals);
        Gradient {
            vals: buf,
            dim: vals.len(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3);
        Gradient {
            vals: [0.0; 3],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vals[..self.dim]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.as_slice()[i]
    }

    pub fn add_scaled(&mut self, other: &Gradient, factor: f64) {
        assert_eq!(self.dim, other.dim);
        for i in 0..self.dim {
            self.vals[i] += factor * other.vals[i];
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Symmetric positive-definite Fisher information matrix (2x2 or 3x3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    data: [[f64; 3]; 3],
    dim: usize,
}

impl FisherMatrix {
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        assert!(dim == 2 || dim == 3);
        let mut data = [[0.0; 3]; 3];
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim);
            data[i][..dim].copy_from_slice(row);
        }
        FisherMatrix { data, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.dim && j < self.dim);
        self.data[i][j]
    }

    /// Solve F x = rhs.
    pub fn solve(&self, rhs: &Gradient) -> Gradient {
        assert_eq!(rhs.dim(), self.dim);
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = self.data[i][j];
            }
        }
        let mut b: Vec<f64> = rhs.as_slice().to_vec();
        crate::linalg::solve_in_place(&mut a, &mut b, n);
        Gradient::from_slice(&b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    mu: f64,
    sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("gaussian mu = {mu}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!("gaussian sigma = {sigma}")));
        }
        Ok(GaussianParams { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceParams {
    m: f64,
    b: f64,
}

impl LaplaceParams {
    pub fn new(m: f64, b: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidParameter(format!("laplace m = {m}")));
        }
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::InvalidParameter(format!("laplace b = {b}")));
        }
        Ok(LaplaceParams { m, b })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewedLaplaceParams {
    m: f64,
    b: f64,
    c: f64,
}

impl SkewedLaplaceParams {
    pub fn new(m: f64, b: f64, c: f64) -> Result<Self> {
        if !m.is_finite() {
            return Err(Error::InvalidParameter(format!("skewed laplace m = {m}")));
        }
        if !b.is_finite() || b <= 0.0 {
            return Err(Error::InvalidParameter(format!("skewed laplace b = {b}")));
        }
        if !c.is_finite() || c <= 0.0 || c >= 1.0 {
            return Err(Error::InvalidParameter(format!("skewed laplace c = {c}")));
        }
        Ok(SkewedLaplaceParams { m, b, c })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

/// A return-density model instance: one of the three families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityParams {
    Gaussian(GaussianParams),
    Laplace(LaplaceParams),
    SkewedLaplace(SkewedLaplaceParams),
}

impl From<GaussianParams> for DensityParams {
    fn from(p: GaussianParams) -> Self {
        DensityParams::Gaussian(p)
    }
}

impl From<LaplaceParams> for DensityParams {
    fn from(p: LaplaceParams) -> Self {
        DensityParams::Laplace(p)
    }
}

impl From<SkewedLaplaceParams> for DensityParams {
    fn from(p: SkewedLaplaceParams) -> Self {
        DensityParams::SkewedLaplace(p)
    }
}

impl DensityParams {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Ok(GaussianParams::new(mu, sigma)?.into())
    }

    pub fn laplace(m: f64, b: f64) -> Result<Self> {
        Ok(LaplaceParams::new(m, b)?.into())
    }

    pub fn skewed_laplace(m: f64, b: f64, c: f64) -> Result<Self> {
        Ok(SkewedLaplaceParams::new(m, b, c)?.into())
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            DensityParams::Gaussian(_) => ModelKind::Gaussian,
            DensityParams::Laplace(_) => ModelKind::Laplace,
            DensityParams::SkewedLaplace(_) => ModelKind::SkewedLaplace,
        }
    }

    pub fn dim(&self) -> usize {
        self.kind().dim()
    }

    /// The central parameter (mu for the Gaussian, m for the Laplace family),
    /// which enters the temporal difference.
    pub fn central(&self) -> f64 {
        match self {
            DensityParams::Gaussian(p) => p.mu,
            DensityParams::Laplace(p) => p.m,
            DensityParams::SkewedLaplace(p) => p.m,
        }
    }

    /// Parameters as an ordered component vector.
    pub fn components(&self) -> Gradient {
        match self {
            DensityParams::Gaussian(p) => Gradient::from_slice(&[p.mu, p.sigma]),
            DensityParams::Laplace(p) => Gradient::from_slice(&[p.m, p.b]),
            DensityParams::SkewedLaplace(p) => Gradient::from_slice(&[p.m, p.b, p.c]),
        }
    }

    pub fn from_components(kind: ModelKind, comps: &[f64]) -> Result<Self> {
        if comps.len() != kind.dim() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} parameters, got {}",
                kind.name(),
                kind.dim(),
                comps.len()
            )));
        }
        match kind {
            ModelKind::Gaussian => Self::gaussian(comps[0], comps[1]),
            ModelKind::Laplace => Self::laplace(comps[0], comps[1]),
            ModelKind::SkewedLaplace => Self::skewed_laplace(comps[0], comps[1], comps[2]),
        }
    }

    /// Construct from raw components, projecting scale and skewness back into
    /// the valid set (the floors used after every gradient update).
    pub fn from_components_projected(kind: ModelKind, comps: &[f64]) -> Result<Self> {
        let central = comps[0].clamp(-PARAM_CAP, PARAM_CAP);
        let scale = comps[1].clamp(SCALE_FLOOR, PARAM_CAP);
        match kind {
            ModelKind::Gaussian => Self::gaussian(central, scale),
            ModelKind::Laplace => Self::laplace(central, scale),
            ModelKind::SkewedLaplace => {
                Self::skewed_laplace(central, scale, comps[2].clamp(SKEW_MIN, SKEW_MAX))
            }
        }
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        match self {
            DensityParams::Gaussian(p) => {
                let z = (x - p.mu) / p.sigma;
                -LN_SQRT_2PI - p.sigma.ln() - 0.5 * z * z
            }
            DensityParams::Laplace(p) => -(2.0 * p.b).ln() - (x - p.m).abs() / p.b,
            DensityParams::SkewedLaplace(p) => {
                let pre = (p.c * (1.0 - p.c) / p.b).ln();
                if x < p.m {
                    pre + (1.0 - p.c) * (x - p.m) / p.b
                } else {
                    pre - p.c * (x - p.m) / p.b
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            DensityParams::Gaussian(p) => 0.5 * (1.0 + erf((x - p.mu) / (p.sigma * SQRT_2))),
            DensityParams::Laplace(p) => {
                if x < p.m {
                    0.5 * ((x - p.m) / p.b).exp()
                } else {
                    1.0 - 0.5 * (-(x - p.m) / p.b).exp()
                }
            }
            DensityParams::SkewedLaplace(p) => {
                if x < p.m {
                    p.c * ((1.0 - p.c) * (x - p.m) / p.b).exp()
                } else {
                    1.0 - (1.0 - p.c) * (-p.c * (x - p.m) / p.b).exp()
                }
            }
        }
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::QuantileOutOfRange(q));
        }
        Ok(match self {
            DensityParams::Gaussian(p) => p.mu + p.sigma * SQRT_2 * erf_inv(2.0 * q - 1.0),
            DensityParams::Laplace(p) => {
                if q <= 0.5 {
                    p.m + p.b * (2.0 * q).ln()
                } else {
                    p.m - p.b * (2.0 - 2.0 * q).ln()
                }
            }
            DensityParams::SkewedLaplace(p) => {
                if q <= p.c {
                    p.m + p.b / (1.0 - p.c) * (q / p.c).ln()
                } else {
                    p.m - p.b / p.c * ((1.0 - q) / (1.0 - p.c)).ln()
                }
            }
        })
    }

    /// Gradient of the log-density in the parameters, evaluated at x.
    ///
    /// At the kink x = m of the Laplace family the right-limit derivative is
    /// returned (the `x >= m` branch).
    pub fn score(&self, x: f64) -> Gradient {
        match self {
            DensityParams::Gaussian(p) => {
                let z = x - p.mu;
                let s2 = p.sigma * p.sigma;
                Gradient::from_slice(&[z / s2, -1.0 / p.sigma + z * z / (s2 * p.sigma)])
            }
            DensityParams::Laplace(p) => {
                let sign = if x >= p.m { 1.0 } else { -1.0 };
                Gradient::from_slice(&[sign / p.b, -1.0 / p.b + (x - p.m).abs() / (p.b * p.b)])
            }
            DensityParams::SkewedLaplace(p) => {
                let y = x - p.m;
                let (sm, sb) = if x < p.m {
                    (
                        -(1.0 - p.c) / p.b,
                        -1.0 / p.b - (1.0 - p.c) * y / (p.b * p.b),
                    )
                } else {
                    (p.c / p.b, -1.0 / p.b + p.c * y / (p.b * p.b))
                };
                let sc = 1.0 / p.c - 1.0 / (1.0 - p.c) - y / p.b;
                Gradient::from_slice(&[sm, sb, sc])
            }
        }
    }

    /// Closed-form Fisher information matrix.
    ///
    /// Gaussian: diag(1/s^2, 2/s^2). Laplace: diag(1/b^2, 1/b^2). The skewed
    /// Laplace matrix couples (m, c) and (b, c); all entries are certified
    /// against quadrature of E[score score^T] in the test suite.
    pub fn fisher_information(&self) -> FisherMatrix {
        match self {
            DensityParams::Gaussian(p) => {
                let s2 = p.sigma * p.sigma;
                FisherMatrix::from_rows(&[&[1.0 / s2, 0.0], &[0.0, 2.0 / s2]])
            }
            DensityParams::Laplace(p) => {
                let b2 = p.b * p.b;
                FisherMatrix::from_rows(&[&[1.0 / b2, 0.0], &[0.0, 1.0 / b2]])
            }
            DensityParams::SkewedLaplace(p) => {
                let (b, c) = (p.b, p.c);
                let b2 = b * b;
                let cc = c * (1.0 - c);
                let f_mm = cc / b2;
                let f_mc = -1.0 / b;
                let f_bb = 1.0 / b2;
                let f_bc = (2.0 * c - 1.0) / (b * cc);
                let f_cc = (2.0 * c * c - 2.0 * c + 1.0) / (cc * cc);
                FisherMatrix::from_rows(&[
                    &[f_mm, 0.0, f_mc],
                    &[0.0, f_bb, f_bc],
                    &[f_mc, f_bc, f_cc],
                ])
            }
        }
    }

    /// Inverse-transform sampling: quantile(U) with U uniform on (0, 1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        self.quantile(u).expect("Open01 draw lies in (0, 1)")
    }

    /// Distribution of `reward + discount * X` for X distributed per `self`.
    /// All three families are closed under this affine map.
    pub fn pushforward(&self, reward: f64, discount: f64) -> DensityParams {
        match self {
            DensityParams::Gaussian(p) => DensityParams::Gaussian(GaussianParams {
                mu: reward + discount * p.mu,
                sigma: discount * p.sigma,
            }),
            DensityParams::Laplace(p) => DensityParams::Laplace(LaplaceParams {
                m: reward + discount * p.m,
                b: discount * p.b,
            }),
            DensityParams::SkewedLaplace(p) => DensityParams::SkewedLaplace(SkewedLaplaceParams {
                m: reward + discount * p.m,
                b: discount * p.b,
                c: p.c,
            }),
        }
    }

    /// Interval [lo, hi] outside which the density carries less than
    /// ~exp(-widths) of its mass; used to bound quadrature supports.
    pub(crate) fn support_bounds(&self, widths: f64) -> (f64, f64) {
        match self {
            DensityParams::Gaussian(p) => {
                let w = (2.0 * widths).sqrt().max(6.0) * p.sigma;
                (p.mu - w, p.mu + w)
            }
            DensityParams::Laplace(p) => (p.m - widths * p.b, p.m + widths * p.b),
            DensityParams::SkewedLaplace(p) => {
                (p.m - widths * p.b / (1.0 - p.c), p.m + widths * p.b / p.c)
            }
        }
    }
}

/// Dense lookup table mapping every (state, action) pair to density
/// parameters of a single model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTable {
    kind: ModelKind,
    n_states: usize,
    n_actions: usize,
    entries: Vec<DensityParams>,
}

impl ParamTable {
    /// Table with every entry set to `init`.
    pub fn filled(n_states: usize, n_actions: usize, init: DensityParams) -> Self {
        ParamTable {
            kind: init.kind(),
            n_states,
            n_actions,
            entries: vec![init; n_states * n_actions],
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn index(&self, state: usize, action: usize) -> Result<usize> {
        if state >= self.n_states || action >= self.n_actions {
            return Err(Error::IndexOutOfRange(format!(
                "(state {state}, action {action}) in {}x{} table",
                self.n_states, self.n_actions
            )));
        }
        Ok(state * self.n_actions + action)
    }

    pub fn get(&self, state: usize, action: usize) -> Result<&DensityParams> {
        Ok(&self.entries[self.index(state, action)?])
    }

    pub fn set(&mut self, state: usize, action: usize, params: DensityParams) -> Result<()> {
        if params.kind() != self.kind {
            return Err(Error::ModelMismatch {
                expected: self.kind.name(),
                got: params.kind().name(),
            });
        }
        let idx = self.index(state, action)?;
        self.entries[idx] = params;
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &DensityParams)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, p)| (i / self.n_actions, i % self.n_actions, p))
    }

    /// Plain-text tabular form: metadata lines, a header, then one row per
    /// (state, action) pair.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# retden param table v1\n");
        out.push_str(&format!("model = {}\n", self.kind.name()));
        out.push_str(&format!("states = {}\n", self.n_states));
        out.push_str(&format!("actions = {}\n", self.n_actions));
        out.push_str(&format!(
            "columns = s a {}\n",
            self.kind.param_names().join(" ")
        ));
        for (s, a, p) in self.entries() {
            let comps = p.components();
            let vals: Vec<String> = comps
                .as_slice()
                .iter()
                .map(|v| format!("{v:.16e}"))
                .collect();
            out.push_str(&format!("{s} {a} {}\n", vals.join(" ")));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind: Option<ModelKind> = None;
        let mut n_states: Option<usize> = None;
        let mut n_actions: Option<usize> = None;
        let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some((key, value)) = line.split_once('=') {
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "model" => kind = Some(value.parse()?),
                    "states" => {
                        n_states = Some(
                            value
                                .parse()
                                .map_err(|_| Error::Parse(format!("states = {value}")))?,
                        )
                    }
                    "actions" => {
                        n_actions = Some(
                            value
                                .parse()
                                .map_err(|_| Error::Parse(format!("actions = {value}")))?,
                        )
                    }
                    "columns" => {}
                    other => return Err(Error::Parse(format!("unknown key `{other}`"))),
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 4 {
                return Err(Error::Parse(format!("short row `{line}`")));
            }
            let s: usize = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("state `{}`", fields[0])))?;
            let a: usize = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("action `{}`", fields[1])))?;
            let comps: Result<Vec<f64>> = fields[2..]
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("value `{f}`")))
                })
                .collect();
            rows.push((s, a, comps?));
        }
        let kind = kind.ok_or_else(|| Error::Parse("missing `model` line".into()))?;
        let n_states = n_states.ok_or_else(|| Error::Parse("missing `states` line".into()))?;
        let n_actions = n_actions.ok_or_else(|| Error::Parse("missing `actions` line".into()))?;
        if rows.len() != n_states * n_actions {
            return Err(Error::Parse(format!(
                "expected {} rows, found {}",
                n_states * n_actions,
                rows.len()
            )));
        }
        let init = DensityParams::from_components(kind, &rows[0].2)?;
        let mut table = ParamTable::filled(n_states, n_actions, init);
        for (s, a, comps) in rows {
            table.set(s, a, DensityParams::from_components(kind, &comps)?)?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_adaptive;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quantile_grid() -> Vec<f64> {
        (1..100).map(|i| i as f64 / 100.0).collect()
    }

    fn random_params(kind: ModelKind, rng: &mut ChaCha8Rng) -> DensityParams {
        use rand::RngExt;
        let central = rng.random_range(-8.0..8.0);
        let scale = rng.random_range(0.05..4.0);
        match kind {
            ModelKind::Gaussian => DensityParams::gaussian(central, scale).unwrap(),
            ModelKind::Laplace => DensityParams::laplace(central, scale).unwrap(),
            ModelKind::SkewedLaplace => {
                let c = rng.random_range(0.05..0.95);
                DensityParams::skewed_laplace(central, scale, c).unwrap()
            }
        }
    }

    const KINDS: [ModelKind; 3] = [
        ModelKind::Gaussian,
        ModelKind::Laplace,
        ModelKind::SkewedLaplace,
    ];

    #[test]
    fn log_pdf_at_central_values() {
        let g = DensityParams::gaussian(2.0, 0.7).unwrap();
        assert!((g.log_pdf(2.0) - -((2.0 * std::f64::consts::PI).sqrt() * 0.7).ln()).abs() < 1e-14);

        let l = DensityParams::laplace(0.0, 1.0).unwrap();
        assert!((l.log_pdf(0.0) - 0.5f64.ln()).abs() < 1e-14);

        let s = DensityParams::skewed_laplace(0.0, 1.0, 0.3).unwrap();
        assert!((s.log_pdf(0.0) - 0.21f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn cdf_at_central_parameter() {
        let g = DensityParams::gaussian(-3.0, 2.0).unwrap();
        assert!((g.cdf(-3.0) - 0.5).abs() < 1e-14);
        let l = DensityParams::laplace(1.5, 0.3).unwrap();
        assert!((l.cdf(1.5) - 0.5).abs() < 1e-14);
        let s = DensityParams::skewed_laplace(1.5, 0.3, 0.27).unwrap();
        assert!((s.cdf(1.5) - 0.27).abs() < 1e-14);
    }

    #[test]
    fn cdf_reference_points() {
        // frozen from numerical quadrature of the densities
        let l = DensityParams::laplace(0.0, 1.0).unwrap();
        assert!((l.cdf(-0.693147) - 0.25).abs() < 1e-6);
        let g = DensityParams::gaussian(0.0, 1.0).unwrap();
        assert!((g.cdf(1.959964) - 0.975).abs() < 1e-6);
    }

    #[test]
    fn cdf_matches_quadrature_of_pdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in KINDS {
            for _ in 0..5 {
                let p = random_params(kind, &mut rng);
                let (lo, _) = p.support_bounds(45.0);
                for x in [p.central() - 1.3, p.central(), p.central() + 0.9] {
                    let mass = integrate_adaptive(&|t| p.pdf(t), lo, x, &[p.central()], 1e-11, 24)
                        .unwrap();
                    assert!(
                        (mass - p.cdf(x)).abs() < 1e-9,
                        "{kind:?}: quadrature {mass} vs cdf {}",
                        p.cdf(x)
                    );
                }
            }
        }
    }

    #[test]
    fn quantile_hits_central_parameter() {
        let l = DensityParams::laplace(4.2, 2.0).unwrap();
        assert!((l.quantile(0.5).unwrap() - 4.2).abs() < 1e-12);
        let s = DensityParams::skewed_laplace(4.2, 2.0, 0.31).unwrap();
        assert!((s.quantile(0.31).unwrap() - 4.2).abs() < 1e-12);
        let g = DensityParams::gaussian(4.2, 2.0).unwrap();
        assert!((g.quantile(0.5).unwrap() - 4.2).abs() < 1e-12);
    }

    #[test]
    fn gaussian_standard_975_quantile() {
        let g = DensityParams::gaussian(0.0, 1.0).unwrap();
        assert!((g.quantile(0.975).unwrap() - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn quantile_rejects_out_of_range() {
        let g = DensityParams::gaussian(0.0, 1.0).unwrap();
        assert!(g.quantile(0.0).is_err());
        assert!(g.quantile(1.0).is_err());
        assert!(g.quantile(-0.2).is_err());
    }

    #[test]
    fn quantile_cdf_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in KINDS {
            for _ in 0..20 {
                let p = random_params(kind, &mut rng);
                for &q in &quantile_grid() {
                    let x = p.quantile(q).unwrap();
                    assert!(
                        (p.cdf(x) - q).abs() <= 1e-9,
                        "{kind:?} q={q}: |cdf(quantile) - q| = {}",
                        (p.cdf(x) - q).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn density_normalizes_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for kind in KINDS {
            for _ in 0..8 {
                let p = random_params(kind, &mut rng);
                let (lo, hi) = p.support_bounds(45.0);
                let mass =
                    integrate_adaptive(&|x| p.pdf(x), lo, hi, &[p.central()], 1e-9, 24).unwrap();
                assert!((mass - 1.0).abs() < 1e-6, "{kind:?}: mass = {mass}");
            }
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-6;
        for kind in KINDS {
            for _ in 0..10 {
                let p = random_params(kind, &mut rng);
                // stay away from the Laplace kink
                for dx in [-2.3, -0.4, 0.7, 1.9] {
                    let x = p.central() + dx;
                    let analytic = p.score(x);
                    let comps = p.components();
                    for i in 0..p.dim() {
                        let mut up = comps.as_slice().to_vec();
                        let mut dn = up.clone();
                        up[i] += h;
                        dn[i] -= h;
                        let fd = (DensityParams::from_components(kind, &up)
                            .unwrap()
                            .log_pdf(x)
                            - DensityParams::from_components(kind, &dn)
                                .unwrap()
                                .log_pdf(x))
                            / (2.0 * h);
                        let denom = analytic.get(i).abs().max(1e-3);
                        assert!(
                            (analytic.get(i) - fd).abs() / denom < 1e-4,
                            "{kind:?} param {i}: analytic {} vs fd {fd}",
                            analytic.get(i)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn laplace_score_uses_right_limit_at_kink() {
        let l = DensityParams::laplace(1.0, 2.0).unwrap();
        assert!((l.score(1.0).get(0) - 0.5).abs() < 1e-15);
        assert!((l.score(1.0 + 1e-9).get(0) - 0.5).abs() < 1e-15);
        assert!((l.score(1.0 - 1e-9).get(0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn fisher_gaussian_and_laplace_closed_forms() {
        let g = DensityParams::gaussian(3.0, 1.0).unwrap();
        let f = g.fisher_information();
        assert!((f.get(0, 0) - 1.0).abs() < 1e-14);
        assert!((f.get(1, 1) - 2.0).abs() < 1e-14);
        assert!(f.get(0, 1).abs() < 1e-14);

        let l = DensityParams::laplace(-2.0, 1.0).unwrap();
        let f = l.fisher_information();
        assert!((f.get(0, 0) - 1.0).abs() < 1e-14);
        assert!((f.get(1, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fisher_matches_quadrature_of_score_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for kind in KINDS {
            for _ in 0..6 {
                let p = random_params(kind, &mut rng);
                let analytic = p.fisher_information();
                let (lo, hi) = p.support_bounds(45.0);
                for i in 0..p.dim() {
                    for j in i..p.dim() {
                        let num = integrate_adaptive(
                            &|x| p.pdf(x) * p.score(x).get(i) * p.score(x).get(j),
                            lo,
                            hi,
                            &[p.central()],
                            1e-10,
                            24,
                        )
                        .unwrap();
                        let scale = analytic.get(i, i).max(analytic.get(j, j)).max(1.0);
                        assert!(
                            (num - analytic.get(i, j)).abs() < 1e-6 * scale,
                            "{kind:?} F[{i}][{j}]: quadrature {num} vs closed {}",
                            analytic.get(i, j)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn fisher_is_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for kind in KINDS {
            for _ in 0..20 {
                let p = random_params(kind, &mut rng);
                let f = p.fisher_information();
                // leading principal minors
                let d1 = f.get(0, 0);
                let d2 = f.get(0, 0) * f.get(1, 1) - f.get(0, 1) * f.get(1, 0);
                assert!(d1 > 0.0 && d2 > 0.0, "{kind:?}: minors {d1}, {d2}");
                if p.dim() == 3 {
                    let det = f.get(0, 0) * (f.get(1, 1) * f.get(2, 2) - f.get(1, 2) * f.get(2, 1))
                        - f.get(0, 1) * (f.get(1, 0) * f.get(2, 2) - f.get(1, 2) * f.get(2, 0))
                        + f.get(0, 2) * (f.get(1, 0) * f.get(2, 1) - f.get(1, 1) * f.get(2, 0));
                    assert!(det > 0.0, "{kind:?}: det {det}");
                }
            }
        }
    }

    #[test]
    fn sampling_laplace_ks_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let l = DensityParams::laplace(0.0, 1.0).unwrap();
        let n = 1_000_000usize;
        let mut draws: Vec<f64> = (0..n).map(|_| l.sample(&mut rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut sup = 0.0f64;
        for (i, x) in draws.iter().enumerate() {
            let emp_hi = (i + 1) as f64 / n as f64;
            let emp_lo = i as f64 / n as f64;
            let cdf = l.cdf(*x);
            sup = sup.max((cdf - emp_hi).abs()).max((cdf - emp_lo).abs());
        }
        assert!(sup < 0.005, "KS distance {sup}");
    }

    #[test]
    fn sampling_gaussian_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g = DensityParams::gaussian(2.5, 1.7).unwrap();
        let n = 1_000_000usize;
        let mean = (0..n).map(|_| g.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.5).abs() < 5.0 * 1.7 / 1e3);
    }

    #[test]
    fn sampling_skewed_left_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let s = DensityParams::skewed_laplace(0.0, 1.0, 0.3).unwrap();
        let n = 100_000usize;
        let below = (0..n).filter(|_| s.sample(&mut rng) < 0.0).count();
        let frac = below as f64 / n as f64;
        assert!((frac - 0.3).abs() < 0.01, "left mass {frac}");
    }

    #[test]
    fn skewed_laplace_at_half_equals_laplace_double_scale() {
        let s = DensityParams::skewed_laplace(1.0, 0.8, 0.5).unwrap();
        let l = DensityParams::laplace(1.0, 1.6).unwrap();
        for i in -40..=40 {
            let x = 1.0 + i as f64 * 0.25;
            assert!((s.pdf(x) - l.pdf(x)).abs() < 1e-14);
            assert!((s.cdf(x) - l.cdf(x)).abs() < 1e-14);
        }
        for &q in &quantile_grid() {
            assert!((s.quantile(q).unwrap() - l.quantile(q).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(DensityParams::gaussian(0.0, 0.0).is_err());
        assert!(DensityParams::gaussian(f64::NAN, 1.0).is_err());
        assert!(DensityParams::laplace(0.0, -1.0).is_err());
        assert!(DensityParams::skewed_laplace(0.0, 1.0, 0.0).is_err());
        assert!(DensityParams::skewed_laplace(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn projection_floors() {
        let p =
            DensityParams::from_components_projected(ModelKind::SkewedLaplace, &[1.0, -3.0, 1.4])
                .unwrap();
        match p {
            DensityParams::SkewedLaplace(s) => {
                assert_eq!(s.b(), SCALE_FLOOR);
                assert_eq!(s.c(), SKEW_MAX);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn param_table_round_trip() {
        let init = DensityParams::skewed_laplace(0.0, 1.0, 0.1).unwrap();
        let mut table = ParamTable::filled(3, 2, init);
        table
            .set(
                1,
                1,
                DensityParams::skewed_laplace(-2.5, 0.125, 0.42).unwrap(),
            )
            .unwrap();
        let text = table.to_text();
        let back = ParamTable::from_text(&text).unwrap();
        assert_eq!(table, back);
    }

    #[test]
    fn param_table_rejects_kind_mismatch() {
        let init = DensityParams::gaussian(0.0, 1.0).unwrap();
        let mut table = ParamTable::filled(2, 2, init);
        let err = table.set(0, 0, DensityParams::laplace(0.0, 1.0).unwrap());
        assert!(err.is_err());
    }
}

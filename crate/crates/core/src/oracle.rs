//! Exact checks on small discrete spaces.
//!
//! Everything here is computed by enumeration: the two dual-VAE evidence
//! bounds and their gaps, the self-training KL identity for the perturbed
//! target `p + q' + u`, and the decomposition of the mixture objective into
//! a KL sum plus a `q`-independent constant.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::ImportanceModel;
use crate::rng::{self, Draw};

/// Largest support size per axis.
pub const MAX_SUPPORT: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JointTag {
    P,
    QTheta,
    QThetaPrime,
    U,
}

/// A probability table over `(x, y, z)`, row-major in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub tag: JointTag,
    table: Vec<f64>,
}

fn check_sizes(nx: usize, ny: usize, nz: usize) -> Result<()> {
    for n in [nx, ny, nz] {
        if n == 0 || n > MAX_SUPPORT {
            return Err(Error::invalid(format!("support size {n} not in 1..={MAX_SUPPORT}")));
        }
    }
    Ok(())
}

/// Flat-Dirichlet draw via normalised exponentials.
pub fn random_simplex(n: usize, rng: &mut impl Draw) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.uniform()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

impl DiscreteJoint {
    pub fn new(nx: usize, ny: usize, nz: usize, tag: JointTag, table: Vec<f64>) -> Result<Self> {
        check_sizes(nx, ny, nz)?;
        if table.len() != nx * ny * nz {
            return Err(Error::Shape(format!("{} entries for {nx}x{ny}x{nz}", table.len())));
        }
        if table.iter().any(|&v| !(v >= 0.0)) || (table.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("joint table must be a simplex"));
        }
        Ok(DiscreteJoint { nx, ny, nz, tag, table })
    }

    pub fn uniform(nx: usize, ny: usize, nz: usize, tag: JointTag) -> Result<Self> {
        let n = nx * ny * nz;
        Self::new(nx, ny, nz, tag, vec![1.0 / n as f64; n])
    }

    pub fn random(nx: usize, ny: usize, nz: usize, tag: JointTag, rng: &mut impl Draw) -> Result<Self> {
        check_sizes(nx, ny, nz)?;
        Self::new(nx, ny, nz, tag, random_simplex(nx * ny * nz, rng))
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.table[(x * self.ny + y) * self.nz + z]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    fn same_shape(&self, o: &DiscreteJoint) -> bool {
        (self.nx, self.ny, self.nz) == (o.nx, o.ny, o.nz)
    }
}

/// `Σ a log(a / b)` for nonnegative, possibly unnormalised `a`, `b`; terms
/// with `a = 0` contribute 0.
pub fn generalized_kl(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(&ai, _)| ai > 0.0)
        .map(|(&ai, &bi)| ai * (ai / bi).ln())
        .sum()
}

/// Conditional tables of a discrete dual model plus a free posterior.
///
/// `q_x_zy[(z*ny + y)*nx + x] = q(x|z,y)`, `q_y_zx[(z*nx + x)*ny + y] = q(y|z,x)`,
/// `q_z_y[y*nz + z]`, `q_z_x[x*nz + z]`, `post[(x*ny + y)*nz + z] = p(z|x,y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularModel {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub q_x_zy: Vec<f64>,
    pub q_y_zx: Vec<f64>,
    pub q_z_y: Vec<f64>,
    pub q_z_x: Vec<f64>,
    pub post: Vec<f64>,
}

impl TabularModel {
    pub fn random(nx: usize, ny: usize, nz: usize, rng: &mut impl Draw) -> Result<Self> {
        check_sizes(nx, ny, nz)?;
        let mut rows = |count: usize, width: usize| -> Vec<f64> {
            (0..count).flat_map(|_| random_simplex(width, rng)).collect()
        };
        Ok(TabularModel {
            nx,
            ny,
            nz,
            q_x_zy: rows(nz * ny, nx),
            q_y_zx: rows(nz * nx, ny),
            q_z_y: rows(ny, nz),
            q_z_x: rows(nx, nz),
            post: rows(nx * ny, nz),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_sizes(self.nx, self.ny, self.nz)?;
        let groups = [
            (&self.q_x_zy, self.nx, self.nz * self.ny),
            (&self.q_y_zx, self.ny, self.nz * self.nx),
            (&self.q_z_y, self.nz, self.ny),
            (&self.q_z_x, self.nz, self.nx),
            (&self.post, self.nz, self.nx * self.ny),
        ];
        for (t, w, n) in groups {
            if t.len() != w * n {
                return Err(Error::Shape("conditional table size".into()));
            }
            for row in t.chunks(w) {
                if row.iter().any(|&v| !(v >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("conditional row is not a simplex"));
                }
            }
        }
        Ok(())
    }

    pub fn qx(&self, x: usize, z: usize, y: usize) -> f64 {
        self.q_x_zy[(z * self.ny + y) * self.nx + x]
    }

    pub fn qy(&self, y: usize, z: usize, x: usize) -> f64 {
        self.q_y_zx[(z * self.nx + x) * self.ny + y]
    }

    pub fn qz_y(&self, z: usize, y: usize) -> f64 {
        self.q_z_y[y * self.nz + z]
    }

    pub fn qz_x(&self, z: usize, x: usize) -> f64 {
        self.q_z_x[x * self.nz + z]
    }

    pub fn posterior_row(&self, x: usize, y: usize) -> &[f64] {
        let s = (x * self.ny + y) * self.nz;
        &self.post[s..s + self.nz]
    }

    /// Model posterior `q(z|x,y) ∝ q(x|z,y) q(z|y)` (generation direction).
    pub fn true_posterior_gen(&self, x: usize, y: usize) -> Vec<f64> {
        normalise((0..self.nz).map(|z| self.qx(x, z, y) * self.qz_y(z, y)).collect())
    }

    /// Model posterior `q(z|x,y) ∝ q(y|z,x) q(z|x)` (classification direction).
    pub fn true_posterior_cls(&self, x: usize, y: usize) -> Vec<f64> {
        normalise((0..self.nz).map(|z| self.qy(y, z, x) * self.qz_x(z, x)).collect())
    }

    /// Replace the free posterior with one of the model posteriors.
    pub fn set_posterior(&mut self, f: impl Fn(&Self, usize, usize) -> Vec<f64>) {
        for x in 0..self.nx {
            for y in 0..self.ny {
                let row = f(self, x, y);
                let s = (x * self.ny + y) * self.nz;
                self.post[s..s + self.nz].copy_from_slice(&row);
            }
        }
    }
}

fn normalise(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboEntry {
    pub x: usize,
    pub y: usize,
    pub elbo: f64,
    pub log_marginal: f64,
    pub gap: f64,
    /// KL from the free posterior to the model posterior, computed directly.
    pub posterior_kl: f64,
}

fn elbo_gap(
    m: &TabularModel,
    lik: impl Fn(usize, usize, usize) -> f64,
    prior: impl Fn(usize, usize, usize) -> f64,
    true_post: impl Fn(usize, usize) -> Vec<f64>,
) -> Vec<ElboEntry> {
    let mut out = Vec::with_capacity(m.nx * m.ny);
    for x in 0..m.nx {
        for y in 0..m.ny {
            let post = m.posterior_row(x, y);
            let marg: f64 = (0..m.nz).map(|z| lik(x, y, z) * prior(x, y, z)).sum();
            let mut elbo = 0.0;
            for (z, &pz) in post.iter().enumerate() {
                if pz > 0.0 {
                    elbo += pz * (lik(x, y, z).ln() + prior(x, y, z).ln() - pz.ln());
                }
            }
            let log_marginal = marg.ln();
            out.push(ElboEntry {
                x,
                y,
                elbo,
                log_marginal,
                gap: log_marginal - elbo,
                posterior_kl: generalized_kl(post, &true_post(x, y)),
            });
        }
    }
    out
}

/// `log q(x|y) ≥ E_p(z|x,y)[log q(x|z,y)] − KL[p(z|x,y) || q(z|y)]` for every cell.
pub fn elbo_gap_gen(m: &TabularModel) -> Vec<ElboEntry> {
    elbo_gap(
        m,
        |x, y, z| m.qx(x, z, y),
        |_, y, z| m.qz_y(z, y),
        |x, y| m.true_posterior_gen(x, y),
    )
}

/// `log q(y|x) ≥ E_p(z|x,y)[log q(y|z,x)] − KL[p(z|x,y) || q(z|x)]` for every cell.
pub fn elbo_gap_cls(m: &TabularModel) -> Vec<ElboEntry> {
    elbo_gap(
        m,
        |x, y, z| m.qy(y, z, x),
        |x, _, z| m.qz_x(z, x),
        |x, y| m.true_posterior_cls(x, y),
    )
}

/// Importance sampling of `log q(x|y)` with the free posterior as proposal.
/// `x` is a one-symbol sequence.
impl ImportanceModel for TabularModel {
    type Latent = usize;

    fn sample_posterior(&self, x: &[usize], y: usize, u: &mut dyn FnMut() -> f64) -> Result<(usize, f64)> {
        let x = self.symbol(x, y)?;
        let row = self.posterior_row(x, y);
        let mut r = u();
        let mut z = self.nz - 1;
        for (i, &p) in row.iter().enumerate() {
            if r < p {
                z = i;
                break;
            }
            r -= p;
        }
        // never return a zero-probability state through rounding
        while row[z] == 0.0 {
            z -= 1;
        }
        Ok((z, row[z].ln()))
    }

    fn log_joint(&self, x: &[usize], y: usize, z: &usize) -> Result<f64> {
        let x = self.symbol(x, y)?;
        Ok(self.qx(x, *z, y).ln() + self.qz_y(*z, y).ln())
    }
}

impl TabularModel {
    fn symbol(&self, x: &[usize], y: usize) -> Result<usize> {
        match x {
            [s] if *s < self.nx && y < self.ny => Ok(*s),
            _ => Err(Error::invalid("tabular model expects one in-range symbol")),
        }
    }

    /// Exact `log q(x|y)`.
    pub fn log_marginal_gen(&self, x: usize, y: usize) -> f64 {
        (0..self.nz)
            .map(|z| self.qx(x, z, y) * self.qz_y(z, y))
            .sum::<f64>()
            .ln()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

fn shapes_match(all: &[&DiscreteJoint]) -> Result<()> {
    if all.windows(2).all(|w| w[0].same_shape(w[1])) {
        Ok(())
    } else {
        Err(Error::Shape("joint tables have different supports".into()))
    }
}

/// `Σ p log((a p + b q' + c u) / q) = KL[p||q] − KL[p || a p + b q' + c u]`
/// with the second KL generalised to the unnormalised sum.
pub fn theorem1_identity_weighted(
    p: &DiscreteJoint,
    q_prime: &DiscreteJoint,
    u: &DiscreteJoint,
    q: &DiscreteJoint,
    weights: [f64; 3],
) -> Result<IdentityCheck> {
    shapes_match(&[p, q_prime, u, q])?;
    if weights.iter().any(|&w| !(w >= 0.0)) || weights[0] == 0.0 {
        return Err(Error::invalid("weights must be >= 0 with a positive weight on p"));
    }
    let s = mix(p, q_prime, u, weights);
    let lhs: f64 = p
        .table
        .iter()
        .zip(&s)
        .zip(&q.table)
        .filter(|((&pi, _), _)| pi > 0.0)
        .map(|((&pi, &si), &qi)| pi * (si / qi).ln())
        .sum();
    let rhs = generalized_kl(&p.table, &q.table) - generalized_kl(&p.table, &s);
    Ok(IdentityCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// The unweighted identity used in the self-training argument.
pub fn theorem1_identity(
    p: &DiscreteJoint,
    q_prime: &DiscreteJoint,
    u: &DiscreteJoint,
    q: &DiscreteJoint,
) -> Result<IdentityCheck> {
    theorem1_identity_weighted(p, q_prime, u, q, [1.0; 3])
}

fn mix(p: &DiscreteJoint, q_prime: &DiscreteJoint, u: &DiscreteJoint, w: [f64; 3]) -> Vec<f64> {
    p.table
        .iter()
        .zip(&q_prime.table)
        .zip(&u.table)
        .map(|((a, b), c)| w[0] * a + w[1] * b + w[2] * c)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decomposition {
    /// `KL[p + q' + u || q]` (generalised).
    pub mixture_objective: f64,
    /// `KL[p||q] + KL[q'||q] + KL[u||q]`.
    pub kl_sum: f64,
    /// `mixture_objective − kl_sum`.
    pub constant: f64,
    /// The same constant from its closed form, which does not involve `q`.
    pub constant_closed_form: f64,
}

pub fn st_objective_decomposition(
    p: &DiscreteJoint,
    q_prime: &DiscreteJoint,
    u: &DiscreteJoint,
    q: &DiscreteJoint,
) -> Result<Decomposition> {
    shapes_match(&[p, q_prime, u, q])?;
    let s = mix(p, q_prime, u, [1.0; 3]);
    let mixture_objective = generalized_kl(&s, &q.table);
    let kl_sum = generalized_kl(&p.table, &q.table)
        + generalized_kl(&q_prime.table, &q.table)
        + generalized_kl(&u.table, &q.table);
    let ent = |v: &[f64]| v.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>();
    Ok(Decomposition {
        mixture_objective,
        kl_sum,
        constant: mixture_objective - kl_sum,
        constant_closed_form: ent(&s) - ent(&p.table) - ent(&q_prime.table) - ent(&u.table),
    })
}

/// Normalised `(p + q' + u) / 3`, the minimiser of the mixture objective
/// over distributions `q`.
pub fn mixture_minimizer(p: &DiscreteJoint, q_prime: &DiscreteJoint, u: &DiscreteJoint) -> Result<DiscreteJoint> {
    shapes_match(&[p, q_prime, u])?;
    let s: Vec<f64> = mix(p, q_prime, u, [1.0; 3]).into_iter().map(|v| v / 3.0).collect();
    let total: f64 = s.iter().sum();
    DiscreteJoint::new(p.nx, p.ny, p.nz, JointTag::QTheta, s.into_iter().map(|v| v / total).collect())
}

/// One line of the oracle-check table.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct OracleSuiteConfig {
    pub seed: u64,
    pub models: usize,
    pub quadruples: usize,
    pub candidates: usize,
    pub max_support: usize,
}

impl Default for OracleSuiteConfig {
    fn default() -> Self {
        OracleSuiteConfig {
            seed: 0,
            models: 1000,
            quadruples: 10_000,
            candidates: 1000,
            max_support: 6,
        }
    }
}

fn row(name: &'static str, cases: usize, worst: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        name,
        cases,
        worst,
        tolerance,
        passed: worst <= tolerance,
    }
}

/// Run every enumeration check on random instances.
pub fn run_suite(cfg: &OracleSuiteConfig) -> Result<Vec<CheckRow>> {
    let ms = cfg.max_support.clamp(1, MAX_SUPPORT);
    let mut rng = rng::seeded(cfg.seed);
    let dim = |rng: &mut rng::SeededRng| 1 + (rng.uniform() * ms as f64) as usize % ms;

    let (mut neg_gap, mut gap_vs_kl, mut tight) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.models {
        let (nx, ny, nz) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let mut m = TabularModel::random(nx, ny, nz, &mut rng)?;
        for e in elbo_gap_gen(&m).iter().chain(&elbo_gap_cls(&m)) {
            neg_gap = neg_gap.max(-e.gap);
            gap_vs_kl = gap_vs_kl.max((e.gap - e.posterior_kl).abs());
        }
        m.set_posterior(TabularModel::true_posterior_gen);
        for e in elbo_gap_gen(&m) {
            tight = tight.max(e.gap.abs());
        }
        m.set_posterior(TabularModel::true_posterior_cls);
        for e in elbo_gap_cls(&m) {
            tight = tight.max(e.gap.abs());
        }
    }

    let (mut ident, mut decomp) = (0.0f64, 0.0f64);
    for _ in 0..cfg.quadruples {
        let (nx, ny, nz) = (dim(&mut rng), dim(&mut rng), dim(&mut rng));
        let p = DiscreteJoint::random(nx, ny, nz, JointTag::P, &mut rng)?;
        let qp = DiscreteJoint::random(nx, ny, nz, JointTag::QThetaPrime, &mut rng)?;
        let u = DiscreteJoint::random(nx, ny, nz, JointTag::U, &mut rng)?;
        let q = DiscreteJoint::random(nx, ny, nz, JointTag::QTheta, &mut rng)?;
        ident = ident.max(theorem1_identity(&p, &qp, &u, &q)?.residual);
        let d = st_objective_decomposition(&p, &qp, &u, &q)?;
        decomp = decomp.max((d.constant - d.constant_closed_form).abs());
    }

    // no sampled q beats the normalised mixture
    let mut beaten = 0.0f64;
    let (nx, ny, nz) = (3, 2, 2);
    let p = DiscreteJoint::random(nx, ny, nz, JointTag::P, &mut rng)?;
    let qp = DiscreteJoint::random(nx, ny, nz, JointTag::QThetaPrime, &mut rng)?;
    let u = DiscreteJoint::random(nx, ny, nz, JointTag::U, &mut rng)?;
    let best = mixture_minimizer(&p, &qp, &u)?;
    let best_obj = st_objective_decomposition(&p, &qp, &u, &best)?.mixture_objective;
    for _ in 0..cfg.candidates {
        let q = DiscreteJoint::random(nx, ny, nz, JointTag::QTheta, &mut rng)?;
        let obj = st_objective_decomposition(&p, &qp, &u, &q)?.mixture_objective;
        beaten = beaten.max(best_obj - obj);
    }

    Ok(vec![
        row("elbo_gap_nonnegative", cfg.models, neg_gap, 1e-12),
        row("elbo_gap_equals_posterior_kl", cfg.models, gap_vs_kl, 1e-12),
        row("elbo_tight_at_true_posterior", cfg.models, tight, 1e-12),
        row("theorem1_identity", cfg.quadruples, ident, 1e-10),
        row("st_decomposition_constant", cfg.quadruples, decomp, 1e-10),
        row("mixture_minimizer", cfg.candidates, beaten, 0.0),
    ])
}

pub fn format_table(rows: &[CheckRow]) -> String {
    let mut s = String::from("check\tcases\tworst_residual\ttolerance\tresult\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{:.3e}\t{:.0e}\t{}",
            r.name,
            r.cases,
            r.worst,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn uniform_quadruple_gives_log3() {
        let uni = |t| DiscreteJoint::uniform(2, 3, 2, t).unwrap();
        let c = theorem1_identity(&uni(JointTag::P), &uni(JointTag::QThetaPrime), &uni(JointTag::U), &uni(JointTag::QTheta)).unwrap();
        assert!((c.lhs - 3f64.ln()).abs() < 1e-12);
        assert!((c.rhs - 3f64.ln()).abs() < 1e-12);
        assert!(c.residual < 1e-12);
    }

    #[test]
    fn identity_with_u_equal_p() {
        let mut rng = seeded(3);
        let p = DiscreteJoint::random(3, 2, 4, JointTag::P, &mut rng).unwrap();
        let qp = DiscreteJoint::random(3, 2, 4, JointTag::QThetaPrime, &mut rng).unwrap();
        let q = DiscreteJoint::random(3, 2, 4, JointTag::QTheta, &mut rng).unwrap();
        assert!(theorem1_identity(&p, &qp, &p, &q).unwrap().residual < 1e-12);
        let w = theorem1_identity_weighted(&p, &qp, &p, &q, [0.5, 2.0, 0.0]).unwrap();
        assert!(w.residual < 1e-12);
    }

    #[test]
    fn degenerate_latent_has_zero_gap() {
        let mut rng = seeded(4);
        let m = TabularModel::random(3, 2, 1, &mut rng).unwrap();
        for e in elbo_gap_gen(&m).iter().chain(&elbo_gap_cls(&m)) {
            assert!(e.gap.abs() < 1e-12);
        }
    }

    #[test]
    fn random_posterior_has_positive_gap() {
        let mut rng = seeded(5);
        let m = TabularModel::random(3, 2, 4, &mut rng).unwrap();
        m.validate().unwrap();
        assert!(elbo_gap_gen(&m).iter().all(|e| e.gap > 0.0));
        assert!(elbo_gap_cls(&m).iter().all(|e| e.gap > 0.0));
    }

    #[test]
    fn symmetric_mixture_minimiser_is_p() {
        let mut rng = seeded(6);
        let p = DiscreteJoint::random(2, 2, 2, JointTag::P, &mut rng).unwrap();
        let m = mixture_minimizer(&p, &p, &p).unwrap();
        for (a, b) in m.table().iter().zip(p.table()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn small_suite_passes() {
        let cfg = OracleSuiteConfig {
            models: 50,
            quadruples: 200,
            candidates: 100,
            ..Default::default()
        };
        let rows = run_suite(&cfg).unwrap();
        assert!(rows.iter().all(|r| r.passed), "{}", format_table(&rows));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(DiscreteJoint::uniform(0, 1, 1, JointTag::P).is_err());
        assert!(DiscreteJoint::uniform(17, 1, 1, JointTag::P).is_err());
        let a = DiscreteJoint::uniform(2, 1, 1, JointTag::P).unwrap();
        let b = DiscreteJoint::uniform(1, 2, 1, JointTag::P).unwrap();
        assert!(theorem1_identity(&a, &a, &a, &b).is_err());
    }
}

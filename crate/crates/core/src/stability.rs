//! Arc matrices, Poincaré matrices and the spectral stability test for
//! periodic walks.
//!
//! Under best-response dynamics the state reached at the end of a switch along
//! arc `a = p -> q` is linear in the starting state: `M_a = I + u(p) c_a^T`,
//! where `c_a^T w` is the time until the switch. Composing the arc matrices of
//! a walk gives its Poincaré matrix `M_c`, the exact return map on the section
//! where the walk's first and last profiles are both argmaxes.

use nalgebra::{DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::StabilityError;
use crate::game::{Game, MixedProfile, PayoffPoint};
use crate::graph::{Arc, PreferenceGraph, Walk};

#[derive(Debug, Clone)]
pub struct ArcMatrix {
    pub matrix: DMatrix<f64>,
    pub arc: Arc,
    /// `c_a`; `c_a . w` is the time until the switch along `arc`.
    pub covector: DVector<f64>,
    /// `u(p)` for the arc's source profile.
    pub rates: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct PoincareMatrix {
    pub matrix: DMatrix<f64>,
    pub walk: Walk,
    pub arc_matrices: Vec<ArcMatrix>,
    /// `partial_products[i] = M_{a_{i+1}} ... M_{a_1}`; the last one is `matrix`.
    pub partial_products: Vec<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: Complex64,
    /// Unit max-norm eigenvector; the largest component is `1`.
    pub vector: Vec<Complex64>,
    /// All eigenvalues, by decreasing modulus then increasing argument.
    pub eigenvalues: Vec<Complex64>,
    pub simple: bool,
    pub dominant: bool,
    /// `(|l1| - |l2|) / |l1|`, or 0 for a 1x1 matrix's missing second value.
    pub gap: f64,
}

impl Eigenpair {
    pub fn is_real(&self, tol: f64) -> bool {
        self.lambda.im.abs() <= tol * self.lambda.norm().max(f64::MIN_POSITIVE)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.lambda.norm()
    }

    pub fn real_vector(&self) -> DVector<f64> {
        DVector::from_iterator(self.vector.len(), self.vector.iter().map(|c| c.re))
    }
}

/// Thresholds of the spectral test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Minimum relative modulus gap `(|l1| - |l2|) / |l1|`.
    pub dominance_gap: f64,
    /// Maximum `|Im l1| / |l1|` for a real eigenvalue.
    pub realness: f64,
    /// `l1` must exceed `1 + lambda_margin`.
    pub lambda_margin: f64,
    /// Dwell times and argmax margins must exceed `dwell * |w|`.
    pub dwell: f64,
    /// Spectral radius within this of 1 is reported as marginal when the
    /// dominance test fails.
    pub unit_band: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            dominance_gap: 1e-8,
            realness: 1e-10,
            lambda_margin: 1e-10,
            dwell: 1e-10,
            unit_band: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SectionCondition {
    /// The walk's profile is not the strict argmax along its segment.
    Argmax,
    /// Negative time spent on a profile.
    Dwell,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason")]
pub enum UnstableReason {
    NotDominant,
    ComplexEigenvalue,
    NotSimple,
    LambdaNotAboveOne,
    SectionViolation {
        step: usize,
        condition: SectionCondition,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason")]
pub enum MarginalReason {
    /// Top eigenvalues sit on the unit circle without a dominant one.
    UnitModulus,
    /// Dominant real eigenvalue within tolerance of 1.
    UnitEigenvalue,
    /// Eigenvector on the boundary of the section cone.
    Boundary {
        step: usize,
        condition: SectionCondition,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail")]
pub enum VerdictStatus {
    Stable,
    Unstable(UnstableReason),
    Marginal(MarginalReason),
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityVerdict {
    pub status: VerdictStatus,
    pub lambda: Option<f64>,
    /// Top eigenvalue as `[re, im]`.
    pub eigenvalue: [f64; 2],
    pub spectral_radius: f64,
    pub eigvec: Option<PayoffPoint>,
    pub dwell_times: Option<Vec<f64>>,
    pub dominance_gap: f64,
}

impl StabilityVerdict {
    pub fn is_stable(&self) -> bool {
        self.status == VerdictStatus::Stable
    }
}

pub fn arc_matrix(game: &Game, arc: &Arc) -> Result<ArcMatrix, StabilityError> {
    game.check_profile(&arc.from)?;
    let rates = game.counterfactual_rates(&arc.from);
    let off = game.block_offset(arc.player);
    let weight = rates.get(arc.player, arc.to_strategy) - rates.get(arc.player, arc.from_strategy);
    if !(weight > 0.0) {
        return Err(StabilityError::ZeroWeightArc(0));
    }
    let dim = game.payoff_dim();
    let mut covector = DVector::zeros(dim);
    covector[off + arc.from_strategy] = 1.0 / weight;
    covector[off + arc.to_strategy] = -1.0 / weight;
    let u = DVector::from_column_slice(rates.as_slice());
    let matrix = DMatrix::identity(dim, dim) + &u * covector.transpose();
    Ok(ArcMatrix {
        matrix,
        arc: arc.clone(),
        covector,
        rates: u,
    })
}

/// `M_c = M_{a_K} ... M_{a_1}` with every prefix kept.
pub fn poincare_matrix(game: &Game, walk: &Walk) -> Result<PoincareMatrix, StabilityError> {
    let dim = game.payoff_dim();
    let mut arc_matrices = Vec::with_capacity(walk.len());
    let mut partial_products = Vec::with_capacity(walk.len());
    let mut acc = DMatrix::identity(dim, dim);
    for (k, arc) in walk.arcs.iter().enumerate() {
        let m = arc_matrix(game, arc).map_err(|e| match e {
            StabilityError::ZeroWeightArc(_) => StabilityError::ZeroWeightArc(k),
            other => other,
        })?;
        acc = &m.matrix * &acc;
        partial_products.push(acc.clone());
        arc_matrices.push(m);
    }
    Ok(PoincareMatrix {
        matrix: acc,
        walk: walk.clone(),
        arc_matrices,
        partial_products,
    })
}

fn sort_spectrum(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(a.arg().total_cmp(&b.arg()))
    });
}

/// Largest-modulus eigenpair from a full nonsymmetric decomposition.
pub fn dominant_eigenpair(matrix: &DMatrix<f64>, tol: f64) -> Result<Eigenpair, StabilityError> {
    let n = matrix.nrows();
    if n == 0 || n != matrix.ncols() {
        return Err(StabilityError::Eigensolver("matrix must be square and nonempty".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(StabilityError::Eigensolver("non-finite entry".into()));
    }
    let eigenvalues = spectrum(matrix)?;
    let lambda = eigenvalues[0];
    let top = lambda.norm();
    let gap = if n > 1 && top > 0.0 {
        (top - eigenvalues[1].norm()) / top
    } else {
        0.0
    };
    let dominant = n == 1 || gap > tol;

    // null space of (M - lambda I)
    let shifted: DMatrix<Complex64> = DMatrix::from_fn(n, n, |i, j| {
        let v = Complex64::new(matrix[(i, j)], 0.0);
        if i == j {
            v - lambda
        } else {
            v
        }
    });
    let svd = shifted.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| StabilityError::Eigensolver("SVD failed".into()))?;
    let sv = &svd.singular_values;
    let scale = matrix.norm().max(top).max(1.0);
    let nullity = sv.iter().filter(|&&s| s <= tol * scale).count();
    let (imin, _) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let mut vector: Vec<Complex64> = v_t.row(imin).iter().map(|c| c.conj()).collect();
    let pivot = vector
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("nonempty");
    for c in vector.iter_mut() {
        *c /= pivot;
    }
    let lambda_real = lambda.im.abs() <= 1e-10 * top.max(f64::MIN_POSITIVE);
    if lambda_real {
        for c in vector.iter_mut() {
            c.im = 0.0;
        }
    }
    let multiplicity = eigenvalues
        .iter()
        .filter(|e| (**e - lambda).norm() <= tol * top.max(1.0))
        .count();
    Ok(Eigenpair {
        lambda,
        vector,
        eigenvalues,
        simple: nullity <= 1 && multiplicity == 1,
        dominant,
        gap,
    })
}

fn schur_eigenvalues(matrix: &DMatrix<f64>) -> Option<Vec<Complex64>> {
    // products of idempotent rank-one updates can stall the QR sweep at
    // machine precision, so loosen the deflation threshold before giving up
    [f64::EPSILON, 1e-14, 1e-13, 1e-12].iter().find_map(|&eps| {
        Schur::try_new(matrix.clone(), eps, 10_000).map(|s| {
            s.complex_eigenvalues()
                .iter()
                .map(|c| Complex64::new(c.re, c.im))
                .collect()
        })
    })
}

/// Fixed pseudo-random orthogonal matrix.
fn rotation(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Eigenvalues sorted by modulus then argument.
///
/// When the shifted QR iteration stalls on exactly repeated eigenvalues, it
/// is rerun on a few orthogonally similar copies of the matrix.
pub fn spectrum(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>, StabilityError> {
    let n = matrix.nrows();
    let mut v = schur_eigenvalues(matrix)
        .or_else(|| {
            (1..=4).find_map(|seed| {
                let q = rotation(n, seed);
                schur_eigenvalues(&(q.transpose() * matrix * &q))
            })
        })
        .ok_or_else(|| StabilityError::Eigensolver("Schur iteration did not converge".into()))?;
    sort_spectrum(&mut v);
    Ok(v)
}

/// A group of computed eigenvalues lying within the clustering radius of
/// one another, summarised by its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenCluster {
    pub mean: [f64; 2],
    pub multiplicity: usize,
}

impl EigenCluster {
    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.mean[0], self.mean[1])
    }
}

/// Single-linkage clusters of `eigenvalues` at distance `radius`.
///
/// A defective eigenvalue with a Jordan block of size `k` comes out of any
/// backward-stable solver split into `k` values spread like `eps^(1/k)`, so
/// individual values are unreliable while the cluster mean stays accurate
/// to roughly machine precision. Clusters are ordered like [`spectrum`].
pub fn cluster_spectrum(eigenvalues: &[Complex64], radius: f64) -> Vec<EigenCluster> {
    let n = eigenvalues.len();
    let mut label: Vec<usize> = (0..n).collect();
    fn root(label: &mut [usize], mut i: usize) -> usize {
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (eigenvalues[i] - eigenvalues[j]).norm() <= radius {
                let (a, b) = (root(&mut label, i), root(&mut label, j));
                label[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<Complex64>> = Default::default();
    for (i, &e) in eigenvalues.iter().enumerate() {
        let r = root(&mut label, i);
        groups.entry(r).or_default().push(e);
    }
    let mut means: Vec<(Complex64, usize)> = groups
        .into_values()
        .map(|g| (g.iter().sum::<Complex64>() / g.len() as f64, g.len()))
        .collect();
    means.sort_by(|a, b| {
        b.0.norm()
            .total_cmp(&a.0.norm())
            .then(a.0.arg().total_cmp(&b.0.arg()))
    });
    means
        .into_iter()
        .map(|(m, k)| EigenCluster {
            mean: [m.re, m.im],
            multiplicity: k,
        })
        .collect()
}

/// The walk started at position `start` (taken modulo its length).
pub fn rotate_walk(walk: &Walk, start: usize) -> Walk {
    walk.rotated(start)
}

/// Outcome of checking the section conditions along a candidate eigenvector.
enum SectionCheck {
    Pass(Vec<f64>),
    Boundary(usize, SectionCondition, Vec<f64>),
    Fail(usize, SectionCondition),
}

/// Prefix points `w_0 = w, w_{i+1} = M_{a_{i+1}} w_i`.
pub fn prefix_points(pm: &PoincareMatrix, w: &DVector<f64>) -> Vec<DVector<f64>> {
    let mut pts = Vec::with_capacity(pm.arc_matrices.len() + 1);
    pts.push(w.clone());
    for m in &pm.arc_matrices {
        let next = &m.matrix * pts.last().expect("nonempty");
        pts.push(next);
    }
    pts
}

/// Dwell times `c_{a_{i+1}} . w_i` along one lap from `w`.
pub fn dwell_times(pm: &PoincareMatrix, w: &DVector<f64>) -> Vec<f64> {
    let pts = prefix_points(pm, w);
    pm.arc_matrices
        .iter()
        .zip(&pts)
        .map(|(m, p)| m.covector.dot(p))
        .collect()
}

fn check_section(game: &Game, pm: &PoincareMatrix, w: &DVector<f64>, tol: f64) -> SectionCheck {
    let walk = &pm.walk;
    let k = walk.len();
    let pts = prefix_points(pm, w);
    let scale = pts.iter().map(|p| p.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let margin = tol * scale;
    let dwell: Vec<f64> = pm
        .arc_matrices
        .iter()
        .zip(&pts)
        .map(|(m, p)| m.covector.dot(p))
        .collect();
    let mut boundary: Option<(usize, SectionCondition)> = None;
    for i in 0..k {
        let profile = &walk.profiles[i];
        let prev = &walk.arcs[(i + k - 1) % k];
        let next = &walk.arcs[i];
        for (pt, tie) in [
            (&pts[i], (prev.player, prev.from_strategy)),
            (&pts[i + 1], (next.player, next.to_strategy)),
        ] {
            for j in 0..game.num_players() {
                let off = game.block_offset(j);
                let cur = pt[off + profile[j]];
                for s in 0..game.strategy_counts()[j] {
                    if s == profile[j] {
                        continue;
                    }
                    let diff = pt[off + s] - cur;
                    if (j, s) == tie {
                        if diff > margin {
                            return SectionCheck::Fail(i, SectionCondition::Argmax);
                        }
                    } else if diff > margin {
                        return SectionCheck::Fail(i, SectionCondition::Argmax);
                    } else if diff >= -margin && boundary.is_none() {
                        boundary = Some((i, SectionCondition::Argmax));
                    }
                }
            }
        }
        if dwell[i] < -margin {
            return SectionCheck::Fail(i, SectionCondition::Dwell);
        }
        if dwell[i] <= margin && boundary.is_none() {
            boundary = Some((i, SectionCondition::Dwell));
        }
    }
    match boundary {
        Some((i, c)) => SectionCheck::Boundary(i, c, dwell),
        None => SectionCheck::Pass(dwell),
    }
}

/// Spectral stability test of a validated walk.
///
/// Stable iff the Poincaré matrix has a dominant, simple, real eigenvalue
/// `l > 1` whose eigenvector keeps every walk profile the strict argmax along
/// its segment with positive dwell time.
pub fn stability_test(game: &Game, walk: &Walk, tols: &Tolerances) -> Result<StabilityVerdict, StabilityError> {
    let pm = poincare_matrix(game, walk)?;
    verdict_for(game, &pm, tols)
}

pub fn verdict_for(game: &Game, pm: &PoincareMatrix, tols: &Tolerances) -> Result<StabilityVerdict, StabilityError> {
    let eig = dominant_eigenpair(&pm.matrix, tols.dominance_gap)?;
    let radius = eig.spectral_radius();
    let real = eig.is_real(tols.realness);
    let mut verdict = StabilityVerdict {
        status: VerdictStatus::Stable,
        lambda: real.then_some(eig.lambda.re),
        eigenvalue: [eig.lambda.re, eig.lambda.im],
        spectral_radius: radius,
        eigvec: None,
        dwell_times: None,
        dominance_gap: eig.gap,
    };
    if !eig.dominant {
        verdict.status = if (radius - 1.0).abs() <= tols.unit_band {
            VerdictStatus::Marginal(MarginalReason::UnitModulus)
        } else {
            VerdictStatus::Unstable(UnstableReason::NotDominant)
        };
        return Ok(verdict);
    }
    if !real {
        verdict.status = VerdictStatus::Unstable(UnstableReason::ComplexEigenvalue);
        return Ok(verdict);
    }
    if !eig.simple {
        verdict.status = VerdictStatus::Unstable(UnstableReason::NotSimple);
        return Ok(verdict);
    }
    let lambda = eig.lambda.re;
    let base = eig.real_vector();
    // the sign with a nonnegative first dwell time goes first
    let first_dwell = pm.arc_matrices[0].covector.dot(&base);
    let signs = if first_dwell >= 0.0 { [1.0, -1.0] } else { [-1.0, 1.0] };
    let mut first_failure = None;
    let mut outcome = None;
    for sign in signs {
        let w = &base * sign;
        match check_section(game, pm, &w, tols.dwell) {
            SectionCheck::Pass(d) => {
                outcome = Some((w, d, None));
                break;
            }
            SectionCheck::Boundary(i, c, d) => {
                if outcome.is_none() {
                    outcome = Some((w, d, Some((i, c))));
                }
            }
            SectionCheck::Fail(i, c) => {
                if first_failure.is_none() {
                    first_failure = Some((i, c));
                }
            }
        }
    }
    let point = |w: &DVector<f64>| PayoffPoint::from_flat(game.strategy_counts(), w.iter().copied().collect()).ok();
    match outcome {
        Some((w, d, boundary)) => {
            verdict.eigvec = point(&w);
            verdict.dwell_times = Some(d);
            verdict.status = if let Some((step, condition)) = boundary {
                VerdictStatus::Marginal(MarginalReason::Boundary { step, condition })
            } else if (lambda - 1.0).abs() <= tols.lambda_margin {
                VerdictStatus::Marginal(MarginalReason::UnitEigenvalue)
            } else if lambda < 1.0 {
                VerdictStatus::Unstable(UnstableReason::LambdaNotAboveOne)
            } else {
                VerdictStatus::Stable
            };
        }
        None => {
            let w = &base * signs[0];
            verdict.eigvec = point(&w);
            verdict.dwell_times = Some(dwell_times(pm, &w));
            let (step, condition) = first_failure.expect("some sign was checked");
            verdict.status = VerdictStatus::Unstable(UnstableReason::SectionViolation { step, condition });
        }
    }
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub player: usize,
    pub strategy: usize,
    /// Payoff of `strategy` minus its owner's payoff at the fixed point.
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FourCycleAnalysis {
    /// The two deviating players, ascending.
    pub players: [usize; 2],
    /// Per deviating player: (strategy played at the first profile, the other one).
    pub strategies: [[usize; 2]; 2],
    /// Per deviating player: probabilities of the two strategies above.
    pub mix: [[f64; 2]; 2],
    /// The fixed point as a mixed profile of the whole game; non-deviating
    /// players keep their strategy from the first profile.
    pub fixed_point: MixedProfile,
    pub persistent: bool,
    pub witness: Option<Witness>,
}

/// Interior fixed point of the 2x2 subgame spanned by a 4-cycle, and whether
/// it is a Nash equilibrium of the whole game.
pub fn four_cycle_analysis(game: &Game, walk: &Walk) -> Result<FourCycleAnalysis, StabilityError> {
    if walk.len() != 4 {
        return Err(StabilityError::NotFourCycle(walk.len()));
    }
    if walk.arcs.iter().any(|a| !(a.weight > 0.0)) {
        return Err(StabilityError::DegenerateWeights);
    }
    let base = &walk.profiles[0];
    let mut players: Vec<usize> = walk.arcs.iter().map(|a| a.player).collect();
    players.sort_unstable();
    players.dedup();
    if players.len() != 2 {
        return Err(StabilityError::DegenerateWeights);
    }
    let (pa, pb) = (players[0], players[1]);
    let other = |player: usize| {
        walk.profiles
            .iter()
            .map(|p| p[player])
            .find(|&s| s != base[player])
            .expect("deviating player changes strategy")
    };
    let (a1, a2) = (base[pa], other(pa));
    let (b1, b2) = (base[pb], other(pb));
    let at = |sa: usize, sb: usize| base.with(pa, sa).with(pb, sb);
    // gain for A from switching a1 -> a2 when B plays b
    let da = |b: usize| game.utility(&at(a2, b), pa) - game.utility(&at(a1, b), pa);
    let db = |a: usize| game.utility(&at(a, b2), pb) - game.utility(&at(a, b1), pb);
    let (da1, da2, db1, db2) = (da(b1), da(b2), db(a1), db(a2));
    if da1 * da2 >= 0.0 || db1 * db2 >= 0.0 {
        return Err(StabilityError::DegenerateWeights);
    }
    // B's weight on b1 makes A indifferent, A's weight on a1 makes B indifferent
    let q = da2 / (da2 - da1);
    let p = db2 / (db2 - db1);
    let mut dists: Vec<Vec<f64>> = game
        .strategy_counts()
        .iter()
        .zip(base.strategies())
        .map(|(&n, &s)| {
            let mut v = vec![0.0; n];
            v[s] = 1.0;
            v
        })
        .collect();
    dists[pa][a1] = p;
    dists[pa][a2] = 1.0 - p;
    dists[pb][b1] = q;
    dists[pb][b2] = 1.0 - q;
    let fixed_point = MixedProfile(dists);
    let cf = game.counterfactual_expected(fixed_point.distributions());
    let (lo, hi) = game.payoff_range();
    let tol = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    let mut witness: Option<Witness> = None;
    for k in 0..game.num_players() {
        let own: f64 = fixed_point.0[k]
            .iter()
            .zip(cf.block(k))
            .map(|(x, v)| x * v)
            .sum();
        for (s, &v) in cf.block(k).iter().enumerate() {
            let gain = v - own;
            if gain > tol && witness.as_ref().is_none_or(|w| gain > w.gain) {
                witness = Some(Witness {
                    player: k,
                    strategy: s,
                    gain,
                });
            }
        }
    }
    Ok(FourCycleAnalysis {
        players: [pa, pb],
        strategies: [[a1, a2], [b1, b2]],
        mix: [[p, 1.0 - p], [q, 1.0 - q]],
        fixed_point,
        persistent: witness.is_none(),
        witness,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub is_sink: bool,
    pub verdict: StabilityVerdict,
    pub attractor_claim: bool,
    pub four_cycle: Option<FourCycleAnalysis>,
}

/// Certifies a simple cycle that is a sink equilibrium.
///
/// Sink cycles longer than four must pass the spectral test; a failure is
/// reported as [`StabilityError::TheoremViolation`]. Sink 4-cycles are
/// persistent but never stable and carry their 2x2 fixed-point analysis.
pub fn certify_sink_cycle(
    game: &Game,
    graph: &PreferenceGraph,
    walk: &Walk,
    tols: &Tolerances,
) -> Result<Certificate, StabilityError> {
    if let Some(k) = walk.arcs.iter().position(|a| !(a.weight > 0.0)) {
        return Err(StabilityError::ZeroWeightArc(k));
    }
    let is_sink = graph.is_sink_cycle(walk)?;
    let verdict = stability_test(game, walk, tols)?;
    let k = walk.len();
    if !is_sink {
        return Ok(Certificate {
            is_sink,
            verdict,
            attractor_claim: false,
            four_cycle: None,
        });
    }
    if k == 4 {
        let analysis = four_cycle_analysis(game, walk)?;
        return Ok(Certificate {
            is_sink,
            verdict,
            attractor_claim: true,
            four_cycle: Some(analysis),
        });
    }
    if !verdict.is_stable() {
        return Err(StabilityError::TheoremViolation {
            len: k,
            detail: format!("{:?}", verdict.status),
        });
    }
    Ok(Certificate {
        is_sink,
        verdict,
        attractor_claim: true,
        four_cycle: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brd::{self, NextSwitch, SectionReturn};
    use crate::builtins;
    use crate::game::PureProfile;

    fn pp(v: &[usize]) -> PureProfile {
        PureProfile(v.to_vec())
    }

    fn pennies_walk() -> (Game, PreferenceGraph, Walk) {
        let g = builtins::matching_pennies();
        let graph = PreferenceGraph::build(&g);
        let w = graph
            .validate_walk(&[pp(&[0, 0]), pp(&[0, 1]), pp(&[1, 1]), pp(&[1, 0])])
            .unwrap();
        (g, graph, w)
    }

    pub(crate) fn shapley_walk() -> (Game, PreferenceGraph, Walk) {
        let g = builtins::shapley();
        let graph = PreferenceGraph::build(&g);
        let six: Vec<PureProfile> = [[0, 2], [1, 2], [1, 0], [2, 0], [2, 1], [0, 1]]
            .iter()
            .map(|p| pp(p))
            .collect();
        let w = graph.validate_walk(&six).unwrap();
        (g, graph, w)
    }

    /// Power iteration with a fixed seed vector; independent of the Schur path.
    fn power_iteration(m: &DMatrix<f64>, iters: usize) -> (f64, DVector<f64>) {
        let n = m.nrows();
        let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
        let mut lambda = 0.0;
        for _ in 0..iters {
            let next = m * &v;
            let norm = next.amax();
            let idx = next.iamax();
            lambda = next[idx] / v[idx];
            v = next / norm;
        }
        (lambda, v)
    }

    #[test]
    fn pennies_arc_matrix() {
        let (g, _, walk) = pennies_walk();
        let am = arc_matrix(&g, &walk.arcs[0]).unwrap();
        assert_eq!(am.covector.as_slice(), &[0.0, 0.0, 0.5, -0.5]);
        assert_eq!(am.rates.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
        let expect = DMatrix::identity(4, 4) + &am.rates * am.covector.transpose();
        assert_eq!(am.matrix, expect);
        assert!((&am.matrix * &am.matrix - &am.matrix).amax() < 1e-15);
        let w = DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]);
        let out = &am.matrix * w;
        assert_eq!(out.as_slice(), &[0.5, -0.5, 0.5, 0.5]);
        // agrees with stepping the simulator
        let wp = PayoffPoint::from_blocks(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let NextSwitch::Switch(ev) = brd::next_switch_from(&g, &wp, &pp(&[0, 0]), 0.0) else {
            panic!()
        };
        assert_eq!(ev.time, 0.5);
    }

    #[test]
    fn zero_weight_arcs_rejected() {
        let g = Game::bimatrix(&[vec![1., 1.], vec![0., 0.]], &[vec![0., 0.], vec![0., 0.]]).unwrap();
        let graph = PreferenceGraph::build(&g);
        let tie = graph.arc_between(0, 1).unwrap().clone();
        assert!(matches!(arc_matrix(&g, &tie), Err(StabilityError::ZeroWeightArc(_))));
    }

    #[test]
    fn pennies_poincare_is_identity_on_section() {
        let (g, _, walk) = pennies_walk();
        let pm = poincare_matrix(&g, &walk).unwrap();
        for x in [0.3, 1.0, 7.5] {
            let w = DVector::from_vec(vec![0.0, 0.0, 0.0, -x]);
            let out = &pm.matrix * &w;
            assert!((out - &w).amax() < 1e-10 * x);
        }
        let eig = dominant_eigenpair(&pm.matrix, 1e-8).unwrap();
        assert!((eig.spectral_radius() - 1.0).abs() < 1e-9);
        assert!(!eig.dominant);
        let v = stability_test(&g, &walk, &Tolerances::default()).unwrap();
        assert!(!v.is_stable());
        assert_eq!(v.status, VerdictStatus::Marginal(MarginalReason::UnitModulus));
    }

    #[test]
    fn eigenpair_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        let e = dominant_eigenpair(&id, 1e-8).unwrap();
        assert!((e.lambda.re - 1.0).abs() < 1e-14);
        assert!(!e.dominant);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 3.0, 1.0]));
        let e = dominant_eigenpair(&d, 1e-8).unwrap();
        assert!((e.lambda.re - 3.0).abs() < 1e-14);
        assert!(e.dominant && e.simple);
        let v = e.real_vector();
        assert!((v[1] - 1.0).abs() < 1e-14 && v[0].abs() < 1e-14 && v[2].abs() < 1e-14);
        // rotation block: complex pair ties in modulus
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let e = dominant_eigenpair(&r, 1e-8).unwrap();
        assert!(!e.dominant);
        assert!((e.spectral_radius() - 2.0).abs() < 1e-12);
        // Jordan block: eigenspace is one-dimensional but multiplicity two
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        let e = dominant_eigenpair(&j, 1e-8).unwrap();
        assert!(!e.simple);
    }

    #[test]
    fn shapley_is_stable() {
        let (g, graph, walk) = shapley_walk();
        let pm = poincare_matrix(&g, &walk).unwrap();
        let v = stability_test(&g, &walk, &Tolerances::default()).unwrap();
        assert!(v.is_stable(), "{:?}", v.status);
        let lambda = v.lambda.unwrap();
        assert!(lambda > 1.0);
        let (pl, _) = power_iteration(&pm.matrix, 2000);
        assert!((pl - lambda).abs() < 1e-9 * lambda, "{pl} vs {lambda}");
        // the simulator returns lambda * w from the eigenvector
        let w = v.eigvec.clone().unwrap();
        match brd::section_return(&g, &w, &walk).unwrap() {
            SectionReturn::Returned { point, dwell_times, .. } => {
                let scale = w.norm_inf() * lambda;
                for (a, b) in point.as_slice().iter().zip(w.as_slice()) {
                    assert!((a - lambda * b).abs() < 1e-8 * scale);
                }
                for (a, b) in dwell_times.iter().zip(v.dwell_times.as_ref().unwrap()) {
                    assert!((a - b).abs() < 1e-8 * scale);
                }
            }
            other => panic!("{other:?}"),
        }
        let cert = certify_sink_cycle(&g, &graph, &walk, &Tolerances::default()).unwrap();
        assert!(cert.is_sink && cert.attractor_claim);
    }

    #[test]
    fn non_sink_cycles_are_not_stable() {
        // rock-paper-scissors: each off-diagonal node has a second outgoing arc
        let g = builtins::rps();
        let graph = PreferenceGraph::build(&g);
        let diag: Vec<Walk> = graph.simple_cycles(6).collect();
        assert!(!diag.is_empty());
        for walk in &diag {
            let v = stability_test(&g, walk, &Tolerances::default()).unwrap();
            assert!(!v.is_stable(), "{} {:?}", walk.label(&g), v.status);
            let cert = certify_sink_cycle(&g, &graph, walk, &Tolerances::default()).unwrap();
            assert!(!cert.is_sink && !cert.attractor_claim);
        }
    }

    #[test]
    fn rotations_share_spectrum_and_transport_eigenvector() {
        let (g, _, walk) = shapley_walk();
        let pm = poincare_matrix(&g, &walk).unwrap();
        let base = spectrum(&pm.matrix).unwrap();
        let eig = dominant_eigenpair(&pm.matrix, 1e-8).unwrap();
        let w = eig.real_vector();
        assert_eq!(rotate_walk(&walk, 0), walk);
        for i in 1..walk.len() {
            let rot = rotate_walk(&walk, i);
            let pr = poincare_matrix(&g, &rot).unwrap();
            let s = spectrum(&pr.matrix).unwrap();
            for (a, b) in base.iter().zip(&s) {
                assert!((a - b).norm() <= 1e-9 * base[0].norm().max(1.0));
            }
            let moved = &pm.partial_products[i - 1] * &w;
            let image = &pr.matrix * &moved;
            assert!((image - &moved * eig.lambda.re).amax() < 1e-8 * moved.amax() * eig.lambda.re);
        }
    }

    #[test]
    fn jordan_block_cluster_mean_is_accurate() {
        // a 3x3 Jordan block at 2, similarity-transformed so rounding splits it
        let j = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 2.0, 1.0, 0.0, 0.0, 2.0]);
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.1, 1.0, 0.7, -0.4, 0.2, 1.0]);
        let m = &p * j * p.clone().try_inverse().unwrap();
        let eigs = spectrum(&m).unwrap();
        let spread = eigs.iter().map(|e| (e - 2.0).norm()).fold(0.0, f64::max);
        let clusters = cluster_spectrum(&eigs, 1e-3);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].multiplicity, 3);
        assert!((clusters[0].mean() - 2.0).norm() < 1e-13, "{clusters:?} spread {spread:e}");
        let two = cluster_spectrum(&[Complex64::new(1.0, 0.0), Complex64::new(3.0, 0.0)], 1e-3);
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].mean, [3.0, 0.0]);
    }

    #[test]
    fn four_cycle_symmetric_and_asymmetric() {
        let (g, _, walk) = pennies_walk();
        let a = four_cycle_analysis(&g, &walk).unwrap();
        assert_eq!(a.mix, [[0.5, 0.5], [0.5, 0.5]]);
        assert!(a.persistent);

        let g = builtins::matching_pennies_asym();
        let graph = PreferenceGraph::build(&g);
        let walk = graph.simple_cycles(4).next().unwrap();
        let a = four_cycle_analysis(&g, &walk).unwrap();
        for k in 0..2 {
            assert!((a.mix[k][0] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(a.persistent);
    }

    #[test]
    fn four_cycle_with_dominant_row() {
        let g = Game::bimatrix(
            &[vec![1., -1., 0.], vec![-1., 1., 0.], vec![2., 2., 3.]],
            &[vec![-1., 1., -5.], vec![1., -1., -5.], vec![0., 0., 1.]],
        )
        .unwrap();
        let graph = PreferenceGraph::build(&g);
        let walk = graph
            .validate_walk(&[pp(&[0, 0]), pp(&[0, 1]), pp(&[1, 1]), pp(&[1, 0])])
            .unwrap();
        let a = four_cycle_analysis(&g, &walk).unwrap();
        assert!(!a.persistent);
        let w = a.witness.unwrap();
        assert_eq!((w.player, w.strategy), (0, 2));

        let (g, _, six) = shapley_walk();
        assert!(matches!(
            four_cycle_analysis(&g, &six),
            Err(StabilityError::NotFourCycle(6))
        ));
    }
}

//! Average delay seen by the user from an external request until reception.
//!
//! The delay recursions form an affine system `x = c + T x` over nine unknowns
//! where `T` is sub-stochastic (it is the transition matrix of the retry chain
//! restricted to its transient states) and `c` collects the one-slot costs.
//! The system is solved exactly; states that cannot reach an exit with
//! probability one get `+inf`. The published closed forms are kept as checks.

use std::fmt;

use serde::Serialize;

use crate::cache::HitProfile;
use crate::error::{Error, Result};
use crate::phy::SuccessProbTable;
use crate::scalar::{is_probability, Scalar};
use crate::throughput::{busy_probability, service_rate, AccessProbs, MuMode};

/// Row sums of `T` closer to one than this are treated as having no exit.
pub const EXIT_TOLERANCE: f64 = 1e-12;

pub const UNKNOWNS: usize = 9;

/// The delay unknowns, in system order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Unknown {
    /// Delay of a fresh external request.
    User,
    /// File at S, D missed it.
    S1,
    /// File at D, D does not attempt, S may serve it.
    S2,
    /// File only at the data center.
    Dc,
    /// DC attempt while S is silent, falling back to `S1`.
    Dc0S,
    /// DC attempt while S transmits to D, falling back to `S1`.
    Dc1S,
    /// DC attempt while S is silent, falling back to `D`.
    Dc0D,
    /// DC attempt while S transmits to D, falling back to `D`.
    Dc1D,
    /// File at D.
    D,
}

impl Unknown {
    pub const ALL: [Unknown; UNKNOWNS] = [
        Unknown::User,
        Unknown::S1,
        Unknown::S2,
        Unknown::Dc,
        Unknown::Dc0S,
        Unknown::Dc1S,
        Unknown::Dc0D,
        Unknown::Dc1D,
        Unknown::D,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Unknown::User => "d_u",
            Unknown::S1 => "d_s1",
            Unknown::S2 => "d_s2",
            Unknown::Dc => "d_dc",
            Unknown::Dc0S => "d_dc0s",
            Unknown::Dc1S => "d_dc1s",
            Unknown::Dc0D => "d_dc0d",
            Unknown::Dc1D => "d_dc1d",
            Unknown::D => "d_d",
        }
    }
}

impl fmt::Display for Unknown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which form of the user-delay equation to assemble.
///
/// As printed, the branch "file at D, S silent, D attempts" lists only the
/// success term and drops the retry term `q_d (1 - P_D->U) (1 + D_D)`.
/// `Corrected` restores it, which makes `d_u` a convex combination of the
/// branch delays; `Verbatim` keeps the printed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserDelayEq {
    Verbatim,
    #[default]
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayInputs<T> {
    pub probs: AccessProbs<T>,
    pub hits: HitProfile<T>,
    pub table: SuccessProbTable<T>,
    /// `P(S => D) = q_s P(Q != 0)`.
    pub transmit_prob: T,
}

impl<T: Scalar> DelayInputs<T> {
    /// Takes `P(Q != 0)` from the queue model: `lambda / mu` when stable, 1 when saturated.
    pub fn from_model(probs: AccessProbs<T>, hits: HitProfile<T>, table: SuccessProbTable<T>, mode: MuMode) -> Self {
        let mu = service_rate(&probs, &hits, &table, mode);
        let busy = busy_probability(probs.lambda, mu);
        DelayInputs {
            probs,
            hits,
            table,
            transmit_prob: probs.q_s * busy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.probs.validate()?;
        self.hits.validate()?;
        self.table.validate()?;
        if !is_probability(self.transmit_prob) {
            return Err(Error::domain(format!("P(S=>D) = {} is not a probability", self.transmit_prob)));
        }
        Ok(())
    }
}

/// `x = constant + transition * x`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem<T> {
    pub transition: [[T; UNKNOWNS]; UNKNOWNS],
    pub constant: [T; UNKNOWNS],
}

impl<T: Scalar> DelaySystem<T> {
    fn zero() -> Self {
        DelaySystem {
            transition: [[T::zero(); UNKNOWNS]; UNKNOWNS],
            constant: [T::zero(); UNKNOWNS],
        }
    }

    fn set(&mut self, row: Unknown, constant: T, terms: &[(Unknown, T)]) {
        let i = row.index();
        self.constant[i] = constant;
        for &(col, coeff) in terms {
            self.transition[i][col.index()] = self.transition[i][col.index()] + coeff;
        }
    }

    /// `I - T`, the system matrix.
    pub fn matrix(&self) -> [[T; UNKNOWNS]; UNKNOWNS] {
        let mut m = self.transition;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { T::one() - *v } else { -*v };
            }
        }
        m
    }

    /// Probability of leaving the chain from each row in one step.
    pub fn exit_probability(&self) -> [T; UNKNOWNS] {
        let mut out = [T::zero(); UNKNOWNS];
        for (o, row) in out.iter_mut().zip(&self.transition) {
            *o = T::one() - row.iter().fold(T::zero(), |a, &b| a + b);
        }
        out
    }

    /// `x - (c + T x)` for each row.
    pub fn residuals(&self, x: &[T; UNKNOWNS]) -> [T; UNKNOWNS] {
        let mut out = [T::zero(); UNKNOWNS];
        for i in 0..UNKNOWNS {
            let rhs = self.transition[i]
                .iter()
                .zip(x)
                .fold(self.constant[i], |acc, (&t, &v)| if t == T::zero() { acc } else { acc + t * v });
            out[i] = x[i] - rhs;
        }
        out
    }
}

/// Encodes the nine delay recursions.
pub fn assemble_delay_system<T: Scalar>(inputs: &DelayInputs<T>, eq: UserDelayEq) -> DelaySystem<T> {
    use Unknown::*;
    let one = T::one();
    let AccessProbs { q_c, q_d, alpha, .. } = inputs.probs;
    let HitProfile { p_hd, p_hs, .. } = inputs.hits;
    let t = &inputs.table;
    let busy = inputs.transmit_prob;
    let idle = one - busy;

    let dc_ok_idle = alpha * t.p_dcu;
    let dc_ok_busy = alpha * t.p_dcu_given_s;

    let mut sys = DelaySystem::zero();

    // D_S1 = q_c P_SU + q_c (1 - P_SU)(1 + D_S1) + (1 - q_c) D_DC,0,S
    sys.set(S1, q_c, &[(S1, q_c * (one - t.p_su)), (Dc0S, one - q_c)]);
    // D_S2 = q_c P_SU + (1 - q_c P_SU)(1 + D_D)
    sys.set(S2, one, &[(D, one - q_c * t.p_su)]);
    // D_DC = P(=>)[a P_DCU/S + (1 - a P_DCU/S)(1 + D_DC)] + P(!=>)[a P_DCU + (1 - a P_DCU)(1 + D_DC)]
    sys.set(Dc, one, &[(Dc, busy * (one - dc_ok_busy) + idle * (one - dc_ok_idle))]);
    sys.set(Dc0S, one, &[(S1, one - dc_ok_idle)]);
    sys.set(Dc1S, one, &[(S1, one - dc_ok_busy)]);
    sys.set(Dc0D, one, &[(D, one - dc_ok_idle)]);
    sys.set(Dc1D, one, &[(D, one - dc_ok_busy)]);
    // D_D = P(=>){q_d[P_DU/S + (1-P_DU/S)(1+D_D)] + (1-q_d) D_DC,1,D}
    //     + P(!=>){q_d[P_DU + (1-P_DU)(1+D_D)] + (1-q_d)(p_hs D_S2 + (1-p_hs) D_DC,0,D)}
    sys.set(
        D,
        q_d,
        &[
            (D, busy * q_d * (one - t.p_du_given_s) + idle * q_d * (one - t.p_du)),
            (Dc1D, busy * (one - q_d)),
            (S2, idle * (one - q_d) * p_hs),
            (Dc0D, idle * (one - q_d) * (one - p_hs)),
        ],
    );

    // D_U, branch by branch.
    let at_d = p_hd;
    let at_s = (one - p_hd) * p_hs;
    let at_dc = (one - p_hd) * (one - p_hs);
    let idle_retry = match eq {
        UserDelayEq::Verbatim => T::zero(),
        UserDelayEq::Corrected => q_d * (one - t.p_du),
    };
    let constant = at_d * (busy * q_d + idle * (q_d * t.p_du + idle_retry))
        + at_s * (busy + idle * q_c)
        + at_dc;
    let dc_retry = busy * (one - dc_ok_busy) + idle * (one - dc_ok_idle);
    sys.set(
        User,
        constant,
        &[
            (Dc1D, at_d * busy * (one - q_d)),
            (D, at_d * (busy * q_d * (one - t.p_du_given_s) + idle * idle_retry)),
            (S2, at_d * idle * (one - q_d) * p_hs),
            (Dc0D, at_d * idle * (one - q_d) * (one - p_hs)),
            (S1, at_s * (busy * (one - dc_ok_busy) + idle * q_c * (one - t.p_su))),
            (Dc0S, at_s * idle * (one - q_c)),
            (Dc, at_dc * dc_retry),
        ],
    );
    sys
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySolution<T> {
    pub d_u: T,
    pub d_s1: T,
    pub d_s2: T,
    pub d_dc: T,
    pub d_dc0s: T,
    pub d_dc1s: T,
    pub d_dc0d: T,
    pub d_dc1d: T,
    pub d_d: T,
    /// Why any unknown is infinite.
    pub diagnostics: Vec<String>,
}

impl<T: Scalar> DelaySolution<T> {
    fn from_array(x: [T; UNKNOWNS], diagnostics: Vec<String>) -> Self {
        DelaySolution {
            d_u: x[0],
            d_s1: x[1],
            d_s2: x[2],
            d_dc: x[3],
            d_dc0s: x[4],
            d_dc1s: x[5],
            d_dc0d: x[6],
            d_dc1d: x[7],
            d_d: x[8],
            diagnostics,
        }
    }

    pub fn to_array(&self) -> [T; UNKNOWNS] {
        [
            self.d_u, self.d_s1, self.d_s2, self.d_dc, self.d_dc0s, self.d_dc1s, self.d_dc0d, self.d_dc1d, self.d_d,
        ]
    }

    pub fn get(&self, which: Unknown) -> T {
        self.to_array()[which.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

/// Which unknowns have a finite expected delay.
///
/// A state is finite iff every state reachable from it can itself reach an
/// exit; otherwise the chain can be trapped with positive probability.
fn finite_states<T: Scalar>(sys: &DelaySystem<T>) -> [bool; UNKNOWNS] {
    let tol = T::lit(EXIT_TOLERANCE);
    let exits = sys.exit_probability().map(|e| e > tol);
    let edge = |i: usize, j: usize| sys.transition[i][j] > T::zero();

    // states that can reach an exit
    let mut reaches_exit = exits;
    loop {
        let mut changed = false;
        for i in 0..UNKNOWNS {
            if !reaches_exit[i] && (0..UNKNOWNS).any(|j| edge(i, j) && reaches_exit[j]) {
                reaches_exit[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    // states that can reach a trap
    let mut doomed = reaches_exit.map(|r| !r);
    loop {
        let mut changed = false;
        for i in 0..UNKNOWNS {
            if !doomed[i] && (0..UNKNOWNS).any(|j| edge(i, j) && doomed[j]) {
                doomed[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    doomed.map(|d| !d)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot falls below `pivot_floor`.
fn gaussian_solve<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>, pivot_floor: T) -> Option<Vec<T>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if !(a[pivot][col].abs() > pivot_floor) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                a[row][k] = a[row][k] - factor * a[col][k];
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let tail = (row + 1..n).fold(T::zero(), |acc, k| acc + a[row][k] * x[k]);
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Solves an assembled system, reporting unreachable exits as `+inf`.
pub fn solve_system<T: Scalar>(sys: &DelaySystem<T>) -> DelaySolution<T> {
    let finite = finite_states(sys);
    let mut diagnostics: Vec<String> = Unknown::ALL
        .iter()
        .filter(|u| !finite[u.index()])
        .map(|u| format!("{u}: no exit path with probability one"))
        .collect();

    let idx: Vec<usize> = (0..UNKNOWNS).filter(|&i| finite[i]).collect();
    let full = sys.matrix();
    let a: Vec<Vec<T>> = idx.iter().map(|&i| idx.iter().map(|&j| full[i][j]).collect()).collect();
    let b: Vec<T> = idx.iter().map(|&i| sys.constant[i]).collect();

    let mut x = [T::infinity(); UNKNOWNS];
    match gaussian_solve(a, b, T::lit(EXIT_TOLERANCE)) {
        Some(sol) => {
            for (&i, v) in idx.iter().zip(sol) {
                x[i] = v;
            }
        }
        None => {
            if !idx.is_empty() {
                diagnostics.push("system is numerically singular; exit probability below tolerance".to_string());
            }
        }
    }
    DelaySolution::from_array(x, diagnostics)
}

pub fn solve_delays<T: Scalar>(inputs: &DelayInputs<T>, eq: UserDelayEq) -> Result<DelaySolution<T>> {
    inputs.validate()?;
    Ok(solve_system(&assemble_delay_system(inputs, eq)))
}

/// `D_DC = (alpha [P(=>)(P_DCU/S - P_DCU) + P_DCU])^-1`.
pub fn d_dc_closed_form<T: Scalar>(inputs: &DelayInputs<T>) -> T {
    let t = &inputs.table;
    T::one() / (inputs.probs.alpha * (inputs.transmit_prob * (t.p_dcu_given_s - t.p_dcu) + t.p_dcu))
}

/// `D_S1 = (q_c P_SU + alpha (1 - q_c) P_DCU)^-1`.
pub fn d_s1_closed_form<T: Scalar>(inputs: &DelayInputs<T>) -> T {
    let p = &inputs.probs;
    T::one() / (p.q_c * inputs.table.p_su + p.alpha * (T::one() - p.q_c) * inputs.table.p_dcu)
}

pub fn d_dc0s_closed_form<T: Scalar>(inputs: &DelayInputs<T>) -> T {
    T::one() + (T::one() - inputs.probs.alpha * inputs.table.p_dcu) * d_s1_closed_form(inputs)
}

pub fn d_dc1s_closed_form<T: Scalar>(inputs: &DelayInputs<T>) -> T {
    T::one() + (T::one() - inputs.probs.alpha * inputs.table.p_dcu_given_s) * d_s1_closed_form(inputs)
}

/// The published expression for `D_D`. It is the per-slot probability of
/// finishing from the D state, so the delay is its reciprocal.
pub fn d_d_expression<T: Scalar>(inputs: &DelayInputs<T>) -> T {
    let one = T::one();
    let p = &inputs.probs;
    let t = &inputs.table;
    let busy = inputs.transmit_prob;
    let idle = one - busy;
    let not_qd = one - p.q_d;
    not_qd * idle * p.q_c * inputs.hits.p_hs * t.p_su
        + not_qd * p.alpha * (busy * t.p_dcu_given_s + idle * (one - inputs.hits.p_hs) * t.p_dcu)
        + p.q_d * (t.p_du + busy * (t.p_du_given_s - t.p_du))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormReport<T> {
    /// `|d_dc - D_DC closed form|`.
    pub dc_residual: T,
    /// `|(q_c P_SU + alpha (1 - q_c) P_DCU) d_s1 - 1|`.
    pub s1_residual: T,
    pub dc0s_residual: T,
    pub dc1s_residual: T,
    /// `|d_d * expression - 1|`.
    pub d_reciprocal_residual: T,
    pub d_expression: T,
}

impl<T: Scalar> ClosedFormReport<T> {
    pub fn max_residual(&self) -> T {
        [self.dc_residual, self.s1_residual, self.dc0s_residual, self.dc1s_residual, self.d_reciprocal_residual]
            .into_iter()
            .fold(T::zero(), T::max)
    }
}

/// Compares a finite solution against the closed forms.
pub fn closed_form_checks<T: Scalar>(inputs: &DelayInputs<T>, solution: &DelaySolution<T>) -> Result<ClosedFormReport<T>> {
    let needed = [solution.d_dc, solution.d_s1, solution.d_dc0s, solution.d_dc1s, solution.d_d];
    if !needed.iter().all(|x| x.is_finite()) {
        return Err(Error::domain("closed-form checks need finite d_dc, d_s1, d_dc0s, d_dc1s and d_d"));
    }
    let p = &inputs.probs;
    let t = &inputs.table;
    let s1_rate = p.q_c * t.p_su + p.alpha * (T::one() - p.q_c) * t.p_dcu;
    let d_expression = d_d_expression(inputs);
    let rel = |a: T, b: T| (a - b).abs() / b.abs().max(T::one());
    Ok(ClosedFormReport {
        dc_residual: rel(solution.d_dc, d_dc_closed_form(inputs)),
        s1_residual: (s1_rate * solution.d_s1 - T::one()).abs(),
        dc0s_residual: rel(solution.d_dc0s, d_dc0s_closed_form(inputs)),
        dc1s_residual: rel(solution.d_dc1s, d_dc1s_closed_form(inputs)),
        d_reciprocal_residual: (solution.d_d * d_expression - T::one()).abs(),
        d_expression,
    })
}

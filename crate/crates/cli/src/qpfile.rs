//! Plain-text QP files.
//!
//! ```text
//! # min ½uᵀHu + gᵀu  s.t.  l ≤ Cu ≤ u
//! 2 1          # n variables, m constraint rows
//! H  2 0
//!    0 2
//! g  -2 -2
//! C  1 1
//! l  -inf
//! u  1
//! ```
//!
//! After the dimensions line each block is a label (`H`, `g`, `C`, `l`,
//! `u`) followed by its entries in row-major order; line breaks inside a
//! block are free. `C`, `l` and `u` may be left out when `m = 0`. Bounds
//! accept `inf` and `-inf`.

use nalgebra::{DMatrix, DVector};
use quadmpc::qp::{QpProblem, QpSolution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

pub fn parse(text: &str) -> Result<QpProblem, CliError> {
    let bad = |msg: String| CliError::Config(format!("qp file: {msg}"));
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace)
        .peekable();
    let mut dim = |what: &str| -> Result<usize, CliError> {
        let tok = tokens.next().ok_or_else(|| bad(format!("missing {what} on the dimensions line")))?;
        tok.parse().map_err(|_| bad(format!("{what} must be a non-negative integer, got {tok:?}")))
    };
    let n = dim("variable count")?;
    let m = dim("constraint count")?;
    let mut blocks: [Option<Vec<f64>>; 5] = Default::default();
    const LABELS: [&str; 5] = ["H", "g", "C", "l", "u"];
    let sizes = [n * n, n, m * n, m, m];
    while let Some(label) = tokens.next() {
        let k = LABELS
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| bad(format!("expected a block label (H, g, C, l, u), got {label:?}")))?;
        if blocks[k].is_some() {
            return Err(bad(format!("block {label} appears twice")));
        }
        let mut values = Vec::with_capacity(sizes[k]);
        while values.len() < sizes[k] {
            let tok = tokens
                .next()
                .ok_or_else(|| bad(format!("block {label} needs {} entries, found {}", sizes[k], values.len())))?;
            let v: f64 = tok
                .parse()
                .map_err(|_| bad(format!("block {label} entry {} is not a number: {tok:?}", values.len())))?;
            values.push(v);
        }
        blocks[k] = Some(values);
    }
    let mut take = |k: usize| -> Result<Vec<f64>, CliError> {
        match blocks[k].take() {
            Some(v) => Ok(v),
            None if sizes[k] == 0 => Ok(Vec::new()),
            None => Err(bad(format!("missing block {}", LABELS[k]))),
        }
    };
    let problem = QpProblem {
        h: DMatrix::from_row_slice(n, n, &take(0)?),
        g: DVector::from_vec(take(1)?),
        c: DMatrix::from_row_slice(m, n, &take(2)?),
        lower: DVector::from_vec(take(3)?),
        upper: DVector::from_vec(take(4)?),
    };
    problem.validate().map_err(|e| bad(e.to_string()))?;
    Ok(problem)
}

/// Writes a problem in the format read by [`parse`].
pub fn render(p: &QpProblem) -> String {
    let (n, m) = (p.num_vars(), p.num_constraints());
    let row = |vals: Vec<f64>| vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
    let mut out = format!("{n} {m}\n");
    let mut block = |label: &str, mat: &DMatrix<f64>| {
        out.push_str(label);
        out.push('\n');
        for r in 0..mat.nrows() {
            out.push_str(&row(mat.row(r).iter().copied().collect()));
            out.push('\n');
        }
    };
    block("H", &p.h);
    block("g", &DMatrix::from_row_slice(1, n, p.g.as_slice()));
    if m > 0 {
        block("C", &p.c);
        block("l", &DMatrix::from_row_slice(1, m, p.lower.as_slice()));
        block("u", &DMatrix::from_row_slice(1, m, p.upper.as_slice()));
    }
    out
}

/// Strictly convex QP with `n` variables and `2n` random two-sided rows
/// around a feasible point.
pub fn random(n: usize, seed: u64) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let m = normal(n, n);
    let h = m.transpose() * &m + DMatrix::identity(n, n);
    let g = normal(n, 1).column(0) * 5.0;
    let c = normal(2 * n, n);
    let x0 = normal(n, 1).column(0) * 0.1;
    let cx = &c * x0;
    let lower = cx.map(|v| v - 0.5);
    let upper = cx.map(|v| v + 0.5);
    QpProblem { h, g, c, lower, upper }
}

/// KKT residuals of a returned solution, all in the ∞-norm.
pub struct KktResiduals {
    pub primal: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

pub fn kkt_residuals(p: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let cu = &p.c * &sol.u;
    let complementarity = (0..cu.len())
        .map(|i| {
            let y = sol.multipliers[i];
            let gap = if y > 0.0 { p.upper[i] - cu[i] } else { cu[i] - p.lower[i] };
            if y == 0.0 {
                0.0
            } else if gap.is_finite() {
                (y * gap).abs()
            } else {
                y.abs()
            }
        })
        .fold(0.0, f64::max);
    KktResiduals {
        primal: p.constraint_violation(&sol.u),
        stationarity: p.stationarity(&sol.u, &sol.multipliers),
        complementarity,
    }
}

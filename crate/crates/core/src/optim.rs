//! Full-batch gradient descent with Armijo backtracking, shared by the SVM and
//! MLP trainers.

/// Starting step of the very first line search.
pub const INITIAL_STEP: f64 = 1.0;
pub const SHRINK: f64 = 0.5;
/// Sufficient-decrease constant.
pub const ARMIJO_C: f64 = 1e-4;
/// Steps below this are treated as a failed line search.
const MIN_STEP: f64 = 1e-20;

#[derive(Clone, Debug, PartialEq)]
pub struct GdOptions {
    /// Stop once the gradient L2 norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// When set, stop after this many consecutive accepted steps whose
    /// decrease is below `tol · max(1, f)`.
    pub stall_patience: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    Stalled,
    MaxIter,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct GdResult {
    pub params: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective at the start point followed by every accepted step.
    pub history: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimizes `value_grad` from `start`.
///
/// `value_grad(x)` returns the objective and its gradient; `value(x)` returns
/// just the objective and is used inside the line search. Each line search
/// starts from `min(1, 2·previous step)` and halves until the Armijo condition
/// `f(x − t g) ≤ f(x) − c·t·‖g‖²` holds, so accepted objectives never increase.
pub fn minimize<VG, V>(
    start: Vec<f64>,
    opts: &GdOptions,
    mut value_grad: VG,
    mut value: V,
) -> GdResult
where
    VG: FnMut(&[f64]) -> (f64, Vec<f64>),
    V: FnMut(&[f64]) -> f64,
{
    let mut x = start;
    let (mut f, mut g) = value_grad(&x);
    let mut history = vec![f];
    let mut step = INITIAL_STEP;
    let mut stalled = 0;
    let mut trial = vec![0.0; x.len()];
    let mut iterations = 0;

    let stop = loop {
        let gnorm = norm(&g);
        if gnorm < opts.tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::MaxIter;
        }
        let gsq = gnorm * gnorm;
        let mut t = step;
        let accepted = loop {
            for ((xt, xi), gi) in trial.iter_mut().zip(&x).zip(&g) {
                *xt = xi - t * gi;
            }
            let ft = value(&trial);
            if ft <= f - ARMIJO_C * t * gsq {
                break Some(ft);
            }
            t *= SHRINK;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some(f_new) = accepted else {
            break StopReason::LineSearchFailed;
        };
        iterations += 1;
        std::mem::swap(&mut x, &mut trial);
        let decrease = f - f_new;
        let (fv, gv) = value_grad(&x);
        f = fv;
        g = gv;
        history.push(f);
        step = (2.0 * t).min(INITIAL_STEP);

        if let Some(patience) = opts.stall_patience {
            if decrease < opts.tol * f.max(1.0) {
                stalled += 1;
                if stalled >= patience {
                    break StopReason::Stalled;
                }
            } else {
                stalled = 0;
            }
        }
    };

    GdResult {
        grad_norm: norm(&g),
        params: x,
        objective: f,
        iterations,
        stop,
        history,
    }
}

use rand::Rng;

use super::{ParamStore, Tape, TensorError, Var};

/// Outcome of comparing tape gradients with central finite differences.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    /// `(parameter index, row-major coordinate)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Checks the gradients of `f` with respect to every coordinate of `params`.
///
/// `f` records a scalar loss on the tape given the bound parameter handles.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`; the floor keeps
/// coordinates whose true gradient is essentially zero from dividing noise
/// by noise.
pub fn finite_diff_check<F>(
    params: &ParamStore,
    step: f64,
    floor: f64,
    f: F,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let all: Vec<(usize, usize)> = params
        .values()
        .iter()
        .enumerate()
        .flat_map(|(pi, v)| (0..v.len()).map(move |k| (pi, k)))
        .collect();
    finite_diff_check_at(params, step, floor, &all, f)
}

/// `count` distinct `(parameter index, row-major coordinate)` pairs drawn
/// uniformly from all coordinates of `params`.
pub fn sample_coordinates<R: Rng + ?Sized>(params: &ParamStore, count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = params.values().iter().map(|v| v.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut flat = rand::seq::index::sample(rng, total, count.min(total)).into_vec();
    flat.sort_unstable();
    flat.into_iter()
        .map(|mut k| {
            let mut pi = 0;
            while k >= sizes[pi] {
                k -= sizes[pi];
                pi += 1;
            }
            (pi, k)
        })
        .collect()
}

/// As [`finite_diff_check`], restricted to the listed coordinates.
pub fn finite_diff_check_at<F>(
    params: &ParamStore,
    step: f64,
    floor: f64,
    coords: &[(usize, usize)],
    f: F,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    if !(step > 0.0) {
        return Err(TensorError::BadHyperparameter("step must be positive"));
    }
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = f(&mut tape, &bound)?;
    let mut grads = tape.backward(loss)?;
    let analytic = params.collect_grads(&bound, &mut grads);

    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let bound = store.bind_frozen(&mut tape);
        let loss = f(&mut tape, &bound)?;
        let v = tape.scalar(loss);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite("function value"))
        }
    };

    let mut report = GradCheckReport::default();
    let mut work = params.clone();
    for &(pi, k) in coords {
        let grad = analytic.get(pi).ok_or(TensorError::IndexOutOfRange {
            op: "finite_diff_check",
            index: pi,
            len: analytic.len(),
        })?;
        if k >= grad.len() {
            return Err(TensorError::IndexOutOfRange {
                op: "finite_diff_check",
                index: k,
                len: grad.len(),
            });
        }
        let at = [k / grad.ncols(), k % grad.ncols()];
        let orig = params.values()[pi][at];
        work.values_mut()[pi][at] = orig + step;
        let plus = eval(&work)?;
        work.values_mut()[pi][at] = orig - step;
        let minus = eval(&work)?;
        work.values_mut()[pi][at] = orig;

        let numeric = (plus - minus) / (2.0 * step);
        let a = grad[at];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(floor);
        report.coordinates += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(rel);
            report.worst = Some((pi, k));
        }
    }
    Ok(report)
}

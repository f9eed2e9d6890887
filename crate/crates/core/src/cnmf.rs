//! Convolutive NMF under the generalized KL divergence.
//!
//! The model reconstructs an `n x m` spectrogram as
//! `sum_q sum_i W[f, i, q] * H[q, t - i]`, with `H` zero before frame 0.
//! All updates are multiplicative majorization-minimization steps, so
//! nonnegativity is preserved and the KL cost never increases.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rayon::prelude::*;
use thiserror::Error;

/// Floor added inside every division and logarithm.
pub const DEFAULT_EPSILON: f64 = 1e-12;
/// Outer iterations used to learn one note template.
pub const TRAINING_ITERATIONS: usize = 500;
/// Activation updates used when transcribing.
pub const TRANSCRIPTION_ITERATIONS: usize = 100;
/// Frame-wise NMF iterations used to warm start the activations.
pub const WARM_START_ITERATIONS: usize = 10;

/// Below this many multiply-adds per kernel call, stay on one thread.
const PARALLEL_WORK: usize = 1 << 18;
/// Row block used for deterministic parallel reductions over frequency.
const REDUCTION_ROWS: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{what} has a negative or non-finite entry")]
    InvalidEntry { what: &'static str },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("spectrogram has {frames} frames, fewer than the template length {tau}")]
    TooFewFrames { frames: usize, tau: usize },
    #[error("cannot train a template from an all-zero spectrogram")]
    Untrainable,
}

fn check_nonnegative<'a>(values: impl IntoIterator<Item = &'a f64>, what: &'static str) -> Result<(), ModelError> {
    if values.into_iter().all(|v| *v >= 0.0 && v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::InvalidEntry { what })
    }
}

/// Per-note convolutive templates, indexed `[f, i, q]`: `n` bins, `tau`
/// frames, `r` notes.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateTensor {
    values: Array3<f64>,
}

impl TemplateTensor {
    pub fn new(values: Array3<f64>) -> Result<Self, ModelError> {
        let (n, tau, r) = values.dim();
        if n == 0 || tau == 0 || r == 0 {
            return Err(ModelError::ShapeMismatch(format!(
                "empty template tensor {n}x{tau}x{r}"
            )));
        }
        check_nonnegative(values.iter(), "template tensor")?;
        Ok(Self {
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(n: usize, tau: usize, r: usize) -> Self {
        Self {
            values: Array3::zeros((n, tau, r)),
        }
    }

    /// Stacks `n x tau` note templates along the note axis.
    pub fn from_notes(notes: &[Array2<f64>]) -> Result<Self, ModelError> {
        let first = notes
            .first()
            .ok_or_else(|| ModelError::ShapeMismatch("no note templates".into()))?;
        let (n, tau) = first.dim();
        let mut values = Array3::zeros((n, tau, notes.len()));
        for (q, note) in notes.iter().enumerate() {
            if note.dim() != (n, tau) {
                return Err(ModelError::ShapeMismatch(format!(
                    "note {q} template is {:?}, expected {:?}",
                    note.dim(),
                    (n, tau)
                )));
            }
            values.slice_mut(s![.., .., q]).assign(note);
        }
        Self::new(values)
    }

    pub fn bins(&self) -> usize {
        self.values.dim().0
    }

    pub fn tau(&self) -> usize {
        self.values.dim().1
    }

    pub fn notes(&self) -> usize {
        self.values.dim().2
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    /// The `n x tau` template of note `q`.
    pub fn note(&self, q: usize) -> ArrayView2<'_, f64> {
        self.values.slice(s![.., .., q])
    }

    /// First frame of every template, as a `tau = 1` tensor.
    pub fn first_frames(&self) -> TemplateTensor {
        Self {
            values: self.values.slice(s![.., 0..1, ..]).to_owned(),
        }
    }

    /// Total mass `sum_{f,i} W[f, i, q]` of each note.
    pub fn note_sums(&self) -> Vec<f64> {
        let r = self.notes();
        let mut sums = vec![0.0; r];
        for lane in self.values.as_slice().expect("standard layout").chunks_exact(r) {
            for (s, &v) in sums.iter_mut().zip(lane) {
                *s += v;
            }
        }
        sums
    }

    /// Rescales each nonzero template to unit mass and returns the factors
    /// that were divided out.
    pub fn normalize(&mut self) -> Vec<f64> {
        let sums = self.note_sums();
        let r = self.notes();
        for lane in self.values.as_slice_mut().expect("standard layout").chunks_exact_mut(r) {
            for (v, &s) in lane.iter_mut().zip(&sums) {
                if s > 0.0 {
                    *v /= s;
                }
            }
        }
        sums
    }

    fn raw(&self) -> &[f64] {
        self.values.as_slice().expect("standard layout")
    }
}

/// Note activations over time, indexed `[q, t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    values: Array2<f64>,
}

impl ActivationMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, ModelError> {
        check_nonnegative(values.iter(), "activation matrix")?;
        Ok(Self {
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(r: usize, m: usize) -> Self {
        Self {
            values: Array2::zeros((r, m)),
        }
    }

    pub fn notes(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn row(&self, q: usize) -> &[f64] {
        let m = self.frames();
        &self.raw()[q * m..(q + 1) * m]
    }

    fn raw(&self) -> &[f64] {
        self.values.as_slice().expect("standard layout")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub epsilon: f64,
    /// Stop once the relative cost change drops below this; 0 disables.
    pub rel_tol: f64,
    /// Seed for randomized initializations.
    pub seed: u64,
}

impl SolverConfig {
    pub fn training() -> Self {
        Self {
            max_iters: TRAINING_ITERATIONS,
            ..Self::transcription()
        }
    }

    pub fn transcription() -> Self {
        Self {
            max_iters: TRANSCRIPTION_ITERATIONS,
            epsilon: DEFAULT_EPSILON,
            rel_tol: 0.0,
            seed: 0,
        }
    }

    pub fn with_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_iters == 0 {
            return Err(ModelError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ModelError::InvalidConfig("epsilon must be positive".into()));
        }
        if self.rel_tol.is_nan() || self.rel_tol < 0.0 {
            return Err(ModelError::InvalidConfig("rel_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// KL cost recorded after every iteration.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FitTrace {
    pub cost_per_iteration: Vec<f64>,
}

impl FitTrace {
    pub fn iterations_run(&self) -> usize {
        self.cost_per_iteration.len()
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.cost_per_iteration.last().copied()
    }

    /// First iteration `k` with `cost[k+1] > cost[k] * (1 + slack)`.
    pub fn first_increase(&self, slack: f64) -> Option<usize> {
        self.cost_per_iteration
            .windows(2)
            .position(|w| w[1] > w[0] * (1.0 + slack))
    }

    fn record(&mut self, cost: f64, rel_tol: f64) -> bool {
        let stop = match self.cost_per_iteration.last() {
            Some(&prev) => rel_tol > 0.0 && (prev - cost).abs() < rel_tol * prev.abs(),
            None => false,
        };
        self.cost_per_iteration.push(cost);
        stop
    }
}

// ---------------------------------------------------------------------------
// Kernels on raw row-major buffers.

#[derive(Clone, Copy)]
struct Dims {
    n: usize,
    tau: usize,
    r: usize,
    m: usize,
}

impl Dims {
    fn work(&self) -> usize {
        self.n * self.tau * self.r * self.m
    }
}

/// Runs `body` on every `m`-long row of `out`, in parallel for large jobs.
/// Each row is computed independently, so the result is scheduling-free.
fn for_each_row(out: &mut [f64], m: usize, work: usize, body: impl Fn(usize, &mut [f64]) + Sync + Send) {
    if work >= PARALLEL_WORK {
        out.par_chunks_mut(m).enumerate().for_each(|(f, row)| body(f, row));
    } else {
        out.chunks_mut(m).enumerate().for_each(|(f, row)| body(f, row));
    }
}

fn apply_into(w: &[f64], h: &[f64], d: Dims, out: &mut [f64]) {
    let Dims { tau, r, m, .. } = d;
    for_each_row(out, m, d.work(), |f, row| {
        row.fill(0.0);
        let wf = &w[f * tau * r..(f + 1) * tau * r];
        for i in 0..tau.min(m) {
            for q in 0..r {
                let wv = wf[i * r + q];
                if wv == 0.0 {
                    continue;
                }
                let hq = &h[q * m..q * m + m - i];
                for (o, &hv) in row[i..].iter_mut().zip(hq) {
                    *o += wv * hv;
                }
            }
        }
    });
}

/// `M / (approx + eps)`, entrywise.
fn ratio(data: &[f64], approx: &[f64], eps: f64) -> Vec<f64> {
    data.iter().zip(approx).map(|(&x, &y)| x / (y + eps)).collect()
}

/// `x ln(x/y) - x + y`, evaluated as `x (u - ln(1 + u))` with
/// `u = (y - x) / x`. The textbook form cancels catastrophically when `y` is
/// close to `x`, leaving rounding noise of order `1e-16 * x` that swamps the
/// cost of a near-exact fit.
fn kl_term(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        return y;
    }
    let u = (y - x) / x;
    if u.abs() < 1e-3 {
        // u^2/2 - u^3/3 + u^4/4 - u^5/5
        x * u * u * (0.5 - u * (1.0 / 3.0 - u * (0.25 - u * 0.2)))
    } else if u.abs() <= 0.5 {
        x * (u - u.ln_1p())
    } else {
        // Far from the fit the log term dominates and nothing cancels.
        x * (x / y).ln() - x + y
    }
}

fn kl_raw(data: &[f64], approx: &[f64], m: usize, eps: f64) -> f64 {
    let row_cost = |(x, y): (&[f64], &[f64])| -> f64 { x.iter().zip(y).map(|(&x, &y)| kl_term(x, y + eps)).sum() };
    let rows: Vec<f64> = if data.len() >= PARALLEL_WORK {
        data.par_chunks(m).zip(approx.par_chunks(m)).map(row_cost).collect()
    } else {
        data.chunks(m).zip(approx.chunks(m)).map(row_cost).collect()
    };
    rows.iter().sum()
}

/// Multiplies `h` in place by the activation MM ratio, given `R = M / approx`.
fn h_step(w: &[f64], h: &mut [f64], ratio: &[f64], d: Dims, eps: f64) {
    let Dims { n, tau, r, m } = d;
    // numer[q, t] = sum_f sum_i W[f, i, q] R[f, t + i]
    let block = |rows: std::ops::Range<usize>| -> Vec<f64> {
        let mut acc = vec![0.0; r * m];
        for f in rows {
            let wf = &w[f * tau * r..(f + 1) * tau * r];
            let rf = &ratio[f * m..(f + 1) * m];
            for i in 0..tau.min(m) {
                for q in 0..r {
                    let wv = wf[i * r + q];
                    if wv == 0.0 {
                        continue;
                    }
                    for (a, &rv) in acc[q * m..q * m + m - i].iter_mut().zip(&rf[i..]) {
                        *a += wv * rv;
                    }
                }
            }
        }
        acc
    };
    let starts: Vec<usize> = (0..n).step_by(REDUCTION_ROWS).collect();
    let span = |s: usize| s..(s + REDUCTION_ROWS).min(n);
    let partials: Vec<Vec<f64>> = if d.work() >= PARALLEL_WORK {
        starts.par_iter().map(|&s| block(span(s))).collect()
    } else {
        starts.iter().map(|&s| block(span(s))).collect()
    };
    let mut numer = vec![0.0; r * m];
    for p in &partials {
        for (a, &b) in numer.iter_mut().zip(p) {
            *a += b;
        }
    }

    // denom[q, t] = sum_{i : t + i < m} sum_f W[f, i, q]
    let mut slice_sums = vec![0.0; tau * r];
    for wf in w.chunks_exact(tau * r) {
        for (s, &v) in slice_sums.iter_mut().zip(wf) {
            *s += v;
        }
    }
    for q in 0..r {
        for t in 0..m {
            let reach = tau.min(m - t);
            let denom: f64 = (0..reach).map(|i| slice_sums[i * r + q]).sum::<f64>() + eps;
            let k = q * m + t;
            h[k] *= numer[k] / denom;
        }
    }
}

/// Multiplies `w` in place by the template MM ratio, given `R = M / approx`.
fn w_step(w: &mut [f64], h: &[f64], ratio: &[f64], d: Dims, eps: f64) {
    let Dims { tau, r, m, .. } = d;
    // denom[i, q] = sum_{s < m - i} H[q, s]
    let mut denom = vec![0.0; tau * r];
    for q in 0..r {
        let hq = &h[q * m..(q + 1) * m];
        for i in 0..tau {
            denom[i * r + q] = hq[..m.saturating_sub(i)].iter().sum::<f64>() + eps;
        }
    }
    for_each_row(w, tau * r, d.work(), |f, wf| {
        let rf = &ratio[f * m..(f + 1) * m];
        for i in 0..tau {
            for q in 0..r {
                let k = i * r + q;
                if wf[k] == 0.0 {
                    continue;
                }
                let numer: f64 = if i < m {
                    rf[i..].iter().zip(&h[q * m..q * m + m - i]).map(|(a, b)| a * b).sum()
                } else {
                    0.0
                };
                wf[k] *= numer / denom[k];
            }
        }
    });
}

fn rescale_rows(h: &mut [f64], m: usize, factors: &[f64]) {
    for (row, &s) in h.chunks_mut(m).zip(factors) {
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn dims_for(data: ArrayView2<'_, f64>, w: &TemplateTensor, h: &ActivationMatrix) -> Result<Dims, ModelError> {
    let (n, m) = data.dim();
    if w.bins() != n {
        return Err(ModelError::ShapeMismatch(format!(
            "spectrogram has {n} bins, templates have {}",
            w.bins()
        )));
    }
    check_model_shapes(w, h)?;
    if h.frames() != m {
        return Err(ModelError::ShapeMismatch(format!(
            "spectrogram has {m} frames, activations have {}",
            h.frames()
        )));
    }
    Ok(Dims {
        n,
        tau: w.tau(),
        r: w.notes(),
        m,
    })
}

fn check_model_shapes(w: &TemplateTensor, h: &ActivationMatrix) -> Result<(), ModelError> {
    if w.notes() != h.notes() {
        return Err(ModelError::ShapeMismatch(format!(
            "templates have {} notes, activations have {} rows",
            w.notes(),
            h.notes()
        )));
    }
    Ok(())
}

fn standard(data: ArrayView2<'_, f64>) -> std::borrow::Cow<'_, [f64]> {
    match data.to_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(data.iter().copied().collect()),
    }
}

// ---------------------------------------------------------------------------
// Public operations.

/// Generalized KL divergence `sum x log(x / (y + eps)) - x + (y + eps)`,
/// with `0 log 0 = 0`.
pub fn kl_divergence(data: ArrayView2<'_, f64>, approx: ArrayView2<'_, f64>) -> Result<f64, ModelError> {
    kl_divergence_eps(data, approx, DEFAULT_EPSILON)
}

pub fn kl_divergence_eps(data: ArrayView2<'_, f64>, approx: ArrayView2<'_, f64>, eps: f64) -> Result<f64, ModelError> {
    if data.dim() != approx.dim() {
        return Err(ModelError::ShapeMismatch(format!(
            "{:?} versus {:?}",
            data.dim(),
            approx.dim()
        )));
    }
    check_nonnegative(data.iter(), "data")?;
    check_nonnegative(approx.iter(), "approximation")?;
    let m = data.ncols().max(1);
    Ok(kl_raw(&standard(data), &standard(approx), m, eps))
}

/// Evaluates the convolutive model, an `n x m` matrix.
pub fn cnmf_apply(w: &TemplateTensor, h: &ActivationMatrix) -> Result<Array2<f64>, ModelError> {
    check_model_shapes(w, h)?;
    let d = Dims {
        n: w.bins(),
        tau: w.tau(),
        r: w.notes(),
        m: h.frames(),
    };
    let mut out = vec![0.0; d.n * d.m];
    if d.m > 0 {
        apply_into(w.raw(), h.raw(), d, &mut out);
    }
    Ok(Array2::from_shape_vec((d.n, d.m), out).expect("shape"))
}

/// One multiplicative activation update.
pub fn update_h(
    data: ArrayView2<'_, f64>,
    w: &TemplateTensor,
    h: &ActivationMatrix,
    eps: f64,
) -> Result<ActivationMatrix, ModelError> {
    let d = dims_for(data, w, h)?;
    check_nonnegative(data.iter(), "data")?;
    let data = standard(data);
    let mut approx = vec![0.0; d.n * d.m];
    apply_into(w.raw(), h.raw(), d, &mut approx);
    let ratio = ratio(&data, &approx, eps);
    let mut next = h.raw().to_vec();
    h_step(w.raw(), &mut next, &ratio, d, eps);
    Ok(ActivationMatrix {
        values: Array2::from_shape_vec((d.r, d.m), next).expect("shape"),
    })
}

/// One multiplicative template update (all shifts at once).
pub fn update_w(
    data: ArrayView2<'_, f64>,
    w: &TemplateTensor,
    h: &ActivationMatrix,
    eps: f64,
) -> Result<TemplateTensor, ModelError> {
    let d = dims_for(data, w, h)?;
    check_nonnegative(data.iter(), "data")?;
    let data = standard(data);
    let mut approx = vec![0.0; d.n * d.m];
    apply_into(w.raw(), h.raw(), d, &mut approx);
    let ratio = ratio(&data, &approx, eps);
    let mut next = w.raw().to_vec();
    w_step(&mut next, h.raw(), &ratio, d, eps);
    Ok(TemplateTensor {
        values: Array3::from_shape_vec((d.n, d.tau, d.r), next).expect("shape"),
    })
}

/// Alternating template/activation updates from the given starting point.
/// Templates are renormalized to unit mass after each template update, with
/// the scale moved into the activations.
pub fn fit_cnmf(
    data: ArrayView2<'_, f64>,
    w0: TemplateTensor,
    h0: ActivationMatrix,
    cfg: &SolverConfig,
) -> Result<(TemplateTensor, ActivationMatrix, FitTrace), ModelError> {
    cfg.validate()?;
    let d = dims_for(data, &w0, &h0)?;
    check_nonnegative(data.iter(), "data")?;
    let data = standard(data);
    let mut w = w0.raw().to_vec();
    let mut h = h0.raw().to_vec();
    let mut approx = vec![0.0; d.n * d.m];
    let mut trace = FitTrace::default();
    apply_into(&w, &h, d, &mut approx);

    for _ in 0..cfg.max_iters {
        let r = ratio(&data, &approx, cfg.epsilon);
        w_step(&mut w, &h, &r, d, cfg.epsilon);

        let mut tensor = TemplateTensor {
            values: Array3::from_shape_vec((d.n, d.tau, d.r), w).expect("shape"),
        };
        let factors = tensor.normalize();
        w = tensor.values.into_raw_vec_and_offset().0;
        rescale_rows(&mut h, d.m, &factors);

        apply_into(&w, &h, d, &mut approx);
        let r = ratio(&data, &approx, cfg.epsilon);
        h_step(&w, &mut h, &r, d, cfg.epsilon);

        apply_into(&w, &h, d, &mut approx);
        if trace.record(kl_raw(&data, &approx, d.m, cfg.epsilon), cfg.rel_tol) {
            break;
        }
    }
    Ok((
        TemplateTensor {
            values: Array3::from_shape_vec((d.n, d.tau, d.r), w).expect("shape"),
        },
        ActivationMatrix {
            values: Array2::from_shape_vec((d.r, d.m), h).expect("shape"),
        },
        trace,
    ))
}

/// Starting point for rank-one training: the `tau` consecutive frames with
/// the largest l1 mass (earliest on ties), and a unit impulse at that frame.
pub fn init_template(v: ArrayView2<'_, f64>, tau: usize) -> Result<(TemplateTensor, ActivationMatrix), ModelError> {
    let (n, m) = v.dim();
    if tau == 0 {
        return Err(ModelError::InvalidConfig("tau must be at least 1".into()));
    }
    if m < tau {
        return Err(ModelError::TooFewFrames { frames: m, tau });
    }
    check_nonnegative(v.iter(), "spectrogram")?;
    let column_mass: Vec<f64> = v.axis_iter(Axis(1)).map(|c| c.sum()).collect();
    let mut best = (0usize, f64::NEG_INFINITY);
    for t in 0..=m - tau {
        let mass: f64 = column_mass[t..t + tau].iter().sum();
        if mass > best.1 {
            best = (t, mass);
        }
    }
    let start = best.0;
    let mut w = Array3::zeros((n, tau, 1));
    w.slice_mut(s![.., .., 0]).assign(&v.slice(s![.., start..start + tau]));
    let mut h = Array2::zeros((1, m));
    h[[0, start]] = 1.0;
    Ok((TemplateTensor { values: w }, ActivationMatrix { values: h }))
}

/// Learns one `n x tau` unit-mass template from an isolated-note
/// spectrogram with a rank-one CNMF. The activation is discarded.
pub fn train_note_template(
    v: ArrayView2<'_, f64>,
    tau: usize,
    cfg: &SolverConfig,
) -> Result<(Array2<f64>, FitTrace), ModelError> {
    cfg.validate()?;
    let (w0, h0) = init_template(v, tau)?;
    if v.iter().all(|&x| x == 0.0) {
        return Err(ModelError::Untrainable);
    }
    let (mut w, _, trace) = fit_cnmf(v, w0, h0, cfg)?;
    w.normalize();
    Ok((w.note(0).to_owned(), trace))
}

/// Initial activations: a flat matrix at the data's mean level, refined by
/// [`WARM_START_ITERATIONS`] frame-wise NMF updates against the first frame
/// of each template.
pub fn warm_start_activations(
    data: ArrayView2<'_, f64>,
    w: &TemplateTensor,
    eps: f64,
) -> Result<ActivationMatrix, ModelError> {
    let (n, m) = data.dim();
    let r = w.notes();
    let level = data.sum() / (n * m * r) as f64;
    let mut h = ActivationMatrix {
        values: Array2::from_elem((r, m), level),
    };
    let first = w.first_frames();
    let d = dims_for(data, &first, &h)?;
    let data = standard(data);
    let mut approx = vec![0.0; n * m];
    let raw = h.values.as_slice_mut().expect("standard layout");
    for _ in 0..WARM_START_ITERATIONS {
        apply_into(first.raw(), raw, d, &mut approx);
        let r = ratio(&data, &approx, eps);
        h_step(first.raw(), raw, &r, d, eps);
    }
    Ok(h)
}

/// Activation updates with frozen templates, starting from `h0`.
pub fn solve_activations(
    data: ArrayView2<'_, f64>,
    w: &TemplateTensor,
    h0: ActivationMatrix,
    cfg: &SolverConfig,
) -> Result<(ActivationMatrix, FitTrace), ModelError> {
    cfg.validate()?;
    let d = dims_for(data, w, &h0)?;
    check_nonnegative(data.iter(), "data")?;
    let data = standard(data);
    let mut h = h0.values.into_raw_vec_and_offset().0;
    let mut approx = vec![0.0; d.n * d.m];
    let mut trace = FitTrace::default();
    apply_into(w.raw(), &h, d, &mut approx);
    for _ in 0..cfg.max_iters {
        let r = ratio(&data, &approx, cfg.epsilon);
        h_step(w.raw(), &mut h, &r, d, cfg.epsilon);
        apply_into(w.raw(), &h, d, &mut approx);
        if trace.record(kl_raw(&data, &approx, d.m, cfg.epsilon), cfg.rel_tol) {
            break;
        }
    }
    Ok((
        ActivationMatrix {
            values: Array2::from_shape_vec((d.r, d.m), h).expect("shape"),
        },
        trace,
    ))
}

/// Activations of a recording under frozen templates: warm start, then
/// `cfg.max_iters` convolutive activation updates.
pub fn transcribe_activations(
    data: ArrayView2<'_, f64>,
    w: &TemplateTensor,
    cfg: &SolverConfig,
) -> Result<(ActivationMatrix, FitTrace), ModelError> {
    cfg.validate()?;
    if data.nrows() != w.bins() {
        return Err(ModelError::ShapeMismatch(format!(
            "spectrogram has {} bins, templates have {}",
            data.nrows(),
            w.bins()
        )));
    }
    check_nonnegative(data.iter(), "data")?;
    let h0 = warm_start_activations(data, w, cfg.epsilon)?;
    solve_activations(data, w, h0, cfg)
}

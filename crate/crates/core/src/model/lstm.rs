//! Projected LSTM layer, batched over rows, with backpropagation through
//! time.
//!
//! One step computes, for a batch of inputs `x` and previous state `(r, c)`:
//!
//! ```text
//! z = x W_in^T + r W_h^T + b          gates [i | f | g | o]
//! c' = sigmoid(f) * c + sigmoid(i) * tanh(g)
//! m  = sigmoid(o) * tanh(c')
//! r' = clip(m W_proj^T)               recurrent state and layer output
//! y  = clip(r' + x)                   output when the layer is residual
//! ```

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::model::params::LstmLayer;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipRange<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> ClipRange<T> {
    pub fn new(lo: f64, hi: f64) -> Self {
        ClipRange {
            lo: T::of(lo),
            hi: T::of(hi),
        }
    }

    #[inline]
    pub fn apply(&self, v: T) -> T {
        if v < self.lo {
            self.lo
        } else if v > self.hi {
            self.hi
        } else {
            v
        }
    }

    /// Subgradient of `apply`: 1 inside the closed range, 0 outside.
    #[inline]
    pub fn passes(&self, v: T) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[inline]
fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Activations of one step kept for the backward pass.
#[derive(Clone, Debug)]
pub struct StepCache<T> {
    input: Array2<T>,
    r_prev: Array2<T>,
    c_prev: Array2<T>,
    i: Array2<T>,
    f: Array2<T>,
    g: Array2<T>,
    o: Array2<T>,
    tanh_c: Array2<T>,
    m: Array2<T>,
    proj: Array2<T>,
    // r' + x before the output clip; present only for residual layers
    residual_sum: Option<Array2<T>>,
}

/// Runs one batched step, returning `(cache, r', c', y)`.
pub fn cell_step<T: Scalar>(
    layer: &LstmLayer<T>,
    input: ArrayView2<T>,
    r_prev: ArrayView2<T>,
    c_prev: ArrayView2<T>,
    clip: ClipRange<T>,
    residual: bool,
) -> (StepCache<T>, Array2<T>, Array2<T>, Array2<T>) {
    let h = layer.hidden_units();
    let mut z = input.dot(&layer.w_input.t()) + r_prev.dot(&layer.w_hidden.t());
    z += &layer.bias;

    let i = z.slice(s![.., 0..h]).mapv(sigmoid);
    let f = z.slice(s![.., h..2 * h]).mapv(sigmoid);
    let g = z.slice(s![.., 2 * h..3 * h]).mapv(|v| v.tanh());
    let o = z.slice(s![.., 3 * h..4 * h]).mapv(sigmoid);

    let c = &f * &c_prev + &i * &g;
    let tanh_c = c.mapv(|v| v.tanh());
    let m = &o * &tanh_c;
    let proj = m.dot(&layer.w_proj.t());
    let r = proj.mapv(|v| clip.apply(v));

    let (y, residual_sum) = if residual {
        let sum = &r + &input;
        (sum.mapv(|v| clip.apply(v)), Some(sum))
    } else {
        (r.clone(), None)
    };

    let cache = StepCache {
        input: input.to_owned(),
        r_prev: r_prev.to_owned(),
        c_prev: c_prev.to_owned(),
        i,
        f,
        g,
        o,
        tanh_c,
        m,
        proj,
        residual_sum,
    };
    (cache, r, c, y)
}

/// Single-vector step: returns the projected, clipped hidden state and the
/// new cell state.
pub fn lstm_cell_forward<T: Scalar>(
    input: &[T],
    prev_hidden: &[T],
    prev_cell: &[T],
    layer: &LstmLayer<T>,
    clip: ClipRange<T>,
) -> Result<(Array1<T>, Array1<T>)> {
    let checks = [
        ("input", input.len(), layer.input_dim()),
        ("previous hidden", prev_hidden.len(), layer.projection_dim()),
        ("previous cell", prev_cell.len(), layer.hidden_units()),
    ];
    for (what, got, want) in checks {
        if got != want {
            return Err(Error::Contract(format!(
                "{what} has width {got}, layer expects {want}"
            )));
        }
    }
    fn row<T>(v: &[T]) -> ArrayView2<'_, T> {
        ArrayView2::from_shape((1, v.len()), v).expect("row view")
    }
    let (_, r, c, _) = cell_step(
        layer,
        row(input),
        row(prev_hidden),
        row(prev_cell),
        clip,
        false,
    );
    Ok((r.row(0).to_owned(), c.row(0).to_owned()))
}

#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    steps: Vec<StepCache<T>>,
}

/// Runs a layer over `inputs[t]` (each `B x in`) from a zero state and
/// returns the per-step outputs `y_t`.
pub fn layer_forward<T: Scalar>(
    layer: &LstmLayer<T>,
    inputs: &[Array2<T>],
    clip: ClipRange<T>,
    residual: bool,
) -> (Vec<Array2<T>>, LayerTrace<T>) {
    let batch = inputs.first().map_or(0, |x| x.nrows());
    let mut r = Array2::zeros((batch, layer.projection_dim()));
    let mut c = Array2::zeros((batch, layer.hidden_units()));
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (cache, r_next, c_next, y) = cell_step(layer, x.view(), r.view(), c.view(), clip, residual);
        steps.push(cache);
        outputs.push(y);
        r = r_next;
        c = c_next;
    }
    (outputs, LayerTrace { steps })
}

/// Backpropagates `d_outputs[t]` (gradient of the loss w.r.t. `y_t`) through
/// the unrolled layer. Returns weight gradients and `d input_t`.
pub fn layer_backward<T: Scalar>(
    layer: &LstmLayer<T>,
    trace: &LayerTrace<T>,
    d_outputs: &[Array2<T>],
    clip: ClipRange<T>,
) -> (LstmLayer<T>, Vec<Array2<T>>) {
    let h = layer.hidden_units();
    let mut grads = LstmLayer::zeros(layer.input_dim(), h, layer.projection_dim());
    let n = trace.steps.len();
    let mut d_inputs = vec![Array2::zeros((0, 0)); n];
    let batch = trace.steps.first().map_or(0, |s| s.input.nrows());
    let mut dr_next: Array2<T> = Array2::zeros((batch, layer.projection_dim()));
    let mut dc_next: Array2<T> = Array2::zeros((batch, h));
    let one = T::one();

    for t in (0..n).rev() {
        let st = &trace.steps[t];
        let dy = &d_outputs[t];

        // through the output clip / residual split
        let (dr, mut dx) = match &st.residual_sum {
            Some(sum) => {
                let mut dsum = dy.clone();
                Zip::from(&mut dsum).and(sum).for_each(|d, &v| {
                    if !clip.passes(v) {
                        *d = T::zero();
                    }
                });
                (&dsum + &dr_next, dsum)
            }
            None => (dy + &dr_next, Array2::zeros(st.input.raw_dim())),
        };

        let mut dproj = dr;
        Zip::from(&mut dproj).and(&st.proj).for_each(|d, &v| {
            if !clip.passes(v) {
                *d = T::zero();
            }
        });
        grads.w_proj += &dproj.t().dot(&st.m);
        let dm = dproj.dot(&layer.w_proj);

        let mut dc = dc_next;
        Zip::from(&mut dc)
            .and(&dm)
            .and(&st.o)
            .and(&st.tanh_c)
            .for_each(|dc, &dm, &o, &tc| *dc += dm * o * (one - tc * tc));

        let mut dz = Array2::zeros((batch, 4 * h));
        {
            let (mut dzi, rest) = dz.view_mut().split_at(Axis(1), h);
            let (mut dzf, rest) = rest.split_at(Axis(1), h);
            let (mut dzg, mut dzo) = rest.split_at(Axis(1), h);
            Zip::from(&mut dzi)
                .and(&dc)
                .and(&st.g)
                .and(&st.i)
                .for_each(|d, &dc, &g, &i| *d = dc * g * i * (one - i));
            Zip::from(&mut dzf)
                .and(&dc)
                .and(&st.c_prev)
                .and(&st.f)
                .for_each(|d, &dc, &cp, &f| *d = dc * cp * f * (one - f));
            Zip::from(&mut dzg)
                .and(&dc)
                .and(&st.i)
                .and(&st.g)
                .for_each(|d, &dc, &i, &g| *d = dc * i * (one - g * g));
            Zip::from(&mut dzo)
                .and(&dm)
                .and(&st.tanh_c)
                .and(&st.o)
                .for_each(|d, &dm, &tc, &o| *d = dm * tc * o * (one - o));
        }
        dc_next = &dc * &st.f;

        grads.w_input += &dz.t().dot(&st.input);
        grads.w_hidden += &dz.t().dot(&st.r_prev);
        grads.bias += &dz.sum_axis(Axis(0));
        dx += &dz.dot(&layer.w_input);
        dr_next = dz.dot(&layer.w_hidden);
        d_inputs[t] = dx;
    }
    (grads, d_inputs)
}

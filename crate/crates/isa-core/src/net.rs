//! Forward passes, reconstruction losses and analytic gradients of the
//! integrated sequence autoencoder.
//!
//! One encoder LSTM is shared by two reconstruction branches:
//!
//! * the holistic branch decodes the entire sequence from the final hidden
//!   state z with a second, z-conditioned LSTM feeding back its own
//!   reconstructions (no teacher forcing);
//! * the atomistic branch predicts the next observation from each encoder
//!   hidden state through a small rectified head, and is teacher-forced by
//!   construction because it reads encoder states of the true input.
//!
//! The integrated loss is `alpha * L_h + (1 - alpha) * L_a`; the backward
//! pass below produces its exact partial derivatives by unrolled
//! backpropagation through time, with the encoder receiving gradient from
//! both branches (through z and through every step's hidden state).

use crate::error::{Error, Result};
use crate::linalg::{hadamard, matvec, matvec_t, relu, sigmoid, tanh_act, Matrix, Vector};
use crate::params::{GateParams, IsaGradients, IsaParameters, LstmCellParams};
use crate::sequence::{Representation, Sequence};

/// Activations of one LSTM step.
#[derive(Clone)]
struct CellStep {
    gate_i: Vector,
    gate_f: Vector,
    gate_o: Vector,
    /// tanh candidate cell state.
    cand: Vector,
    cell: Vector,
    tanh_cell: Vector,
    hidden: Vector,
}

/// One holistic decoding step: the cell plus the rectified output head.
struct DecStep {
    cell: CellStep,
    /// Pre-activation of the output head.
    pre: Vector,
    /// relu(pre).
    act: Vector,
    xhat: Vector,
}

/// One next-step prediction from encoder state h_t (t = 1..T-1).
struct AtomStep {
    pre: Vector,
    act: Vector,
    pred: Vector,
}

struct SeqForward {
    enc: Vec<CellStep>,
    z: Vector,
    dec: Vec<DecStep>,
    atom: Vec<AtomStep>,
    loss_h: f64,
    loss_a: f64,
}

fn gate_preactivation(g: &GateParams, h_prev: &Vector, x: &Vector, z: Option<&Vector>) -> Vector {
    let mut a = matvec(&g.recurrent, h_prev);
    a.add_assign(&matvec(&g.input, x));
    if let Some(v) = &g.latent {
        a.add_assign(&matvec(v, z.expect("latent-conditioned gate stepped without z")));
    }
    a.add_assign(&g.bias);
    a
}

/// Shared LSTM update: logistic gates, tanh candidate,
/// c_t = f ⊙ c_{t-1} + i ⊙ c̃, h_t = o ⊙ tanh(c_t).
fn cell_step(
    cell: &LstmCellParams,
    h_prev: &Vector,
    c_prev: &Vector,
    x: &Vector,
    z: Option<&Vector>,
) -> CellStep {
    let gate_i = sigmoid(&gate_preactivation(&cell.input_gate, h_prev, x, z));
    let gate_f = sigmoid(&gate_preactivation(&cell.forget_gate, h_prev, x, z));
    let gate_o = sigmoid(&gate_preactivation(&cell.output_gate, h_prev, x, z));
    let cand = tanh_act(&gate_preactivation(&cell.candidate, h_prev, x, z));
    let mut c = hadamard(&gate_f, c_prev);
    c.add_assign(&hadamard(&gate_i, &cand));
    let tanh_cell = tanh_act(&c);
    let hidden = hadamard(&gate_o, &tanh_cell);
    CellStep {
        gate_i,
        gate_f,
        gate_o,
        cand,
        cell: c,
        tanh_cell,
        hidden,
    }
}

/// Zeroes gradient entries where the rectifier was inactive.
fn relu_backward(mut g: Vector, pre: &Vector) -> Vector {
    for (gk, &p) in g.as_mut_slice().iter_mut().zip(pre.iter()) {
        if p <= 0.0 {
            *gk = 0.0;
        }
    }
    g
}

/// dL/da for a gate given dL/dy and the activated value y.
fn dlogistic(dy: &Vector, y: &Vector) -> Vector {
    Vector::from_vec(
        dy.iter()
            .zip(y.iter())
            .map(|(&d, &y)| d * y * (1.0 - y))
            .collect(),
    )
}

fn dtanh(dy: &Vector, y: &Vector) -> Vector {
    Vector::from_vec(
        dy.iter()
            .zip(y.iter())
            .map(|(&d, &y)| d * (1.0 - y * y))
            .collect(),
    )
}

/// Backward through one LSTM step.
///
/// `gh_t` is the complete gradient on h_t, `gc` the cell-state carry from
/// step t+1. Parameter gradients are accumulated into `grad`; gradients on
/// h_{t-1}, the step input and z are accumulated into the respective
/// output vectors. Returns the cell-state carry for step t-1.
#[allow(clippy::too_many_arguments)]
fn cell_backward(
    params: &LstmCellParams,
    grad: &mut LstmCellParams,
    step: &CellStep,
    h_prev: &Vector,
    c_prev: &Vector,
    x_in: &Vector,
    z: Option<&Vector>,
    gh_t: &Vector,
    mut gc: Vector,
    gh_prev: &mut Vector,
    mut gx_prev: Option<&mut Vector>,
    mut dz: Option<&mut Vector>,
) -> Vector {
    // dL/dc_t = carry + dL/dh_t ⊙ o_t ⊙ tanh'(c_t)
    {
        let gcs = gc.as_mut_slice();
        for (k, ((&gh, &o), &tc)) in gh_t
            .iter()
            .zip(step.gate_o.iter())
            .zip(step.tanh_cell.iter())
            .enumerate()
        {
            gcs[k] += gh * o * (1.0 - tc * tc);
        }
    }
    let d_gate_o = hadamard(gh_t, &step.tanh_cell);
    let d_gate_i = hadamard(&gc, &step.cand);
    let d_gate_f = hadamard(&gc, c_prev);
    let d_cand = hadamard(&gc, &step.gate_i);
    let carry = hadamard(&gc, &step.gate_f);

    let da_i = dlogistic(&d_gate_i, &step.gate_i);
    let da_f = dlogistic(&d_gate_f, &step.gate_f);
    let da_o = dlogistic(&d_gate_o, &step.gate_o);
    let da_c = dtanh(&d_cand, &step.cand);

    let gates: [(&GateParams, &mut GateParams, &Vector); 4] = [
        (&params.input_gate, &mut grad.input_gate, &da_i),
        (&params.forget_gate, &mut grad.forget_gate, &da_f),
        (&params.output_gate, &mut grad.output_gate, &da_o),
        (&params.candidate, &mut grad.candidate, &da_c),
    ];
    for (gp, gg, da) in gates {
        gg.recurrent.add_outer(da, h_prev);
        gh_prev.add_assign(&matvec_t(&gp.recurrent, da));
        gg.input.add_outer(da, x_in);
        if let Some(gx) = gx_prev.as_deref_mut() {
            gx.add_assign(&matvec_t(&gp.input, da));
        }
        if let Some(zv) = z {
            gg.latent
                .as_mut()
                .expect("gradient gate lacks latent tensor")
                .add_outer(da, zv);
            if let Some(dzv) = dz.as_deref_mut() {
                dzv.add_assign(&matvec_t(
                    gp.latent.as_ref().expect("parameter gate lacks latent tensor"),
                    da,
                ));
            }
        }
        gg.bias.add_assign(da);
    }
    carry
}

fn check_width(p: &IsaParameters, s: &Sequence) -> Result<()> {
    if s.width() != p.width() {
        return Err(Error::Shape(format!(
            "sequence '{}' has width {} but the model expects {}",
            s.id,
            s.width(),
            p.width()
        )));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_batch(batch: &[Sequence]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    Ok(())
}

impl IsaParameters {
    /// One encoder step from `(h_prev, c_prev)` on observation `x_t`.
    /// Initial state is all zeros. Panics with a shape report on
    /// mismatched lengths.
    pub fn encoder_step(&self, h_prev: &Vector, c_prev: &Vector, x_t: &Vector) -> (Vector, Vector) {
        let s = cell_step(&self.encoder, h_prev, c_prev, x_t, None);
        (s.hidden, s.cell)
    }

    /// Encodes a sequence to its fixed-length summary z = h_T.
    pub fn encode(&self, s: &Sequence) -> Result<Representation> {
        check_width(self, s)?;
        let hdim = self.hidden_size();
        let mut h = Vector::zeros(hdim);
        let mut c = Vector::zeros(hdim);
        for t in 0..s.len() {
            let step = cell_step(&self.encoder, &h, &c, &s.observation(t), None);
            h = step.hidden;
            c = step.cell;
        }
        Ok(Representation {
            z: h,
            source_id: s.id.clone(),
        })
    }

    /// One holistic decoding step. Returns `(x̂_t, ĥ_t, Ĉ_t)`; the first
    /// step uses zero state and a zero previous reconstruction.
    pub fn holistic_decode_step(
        &self,
        z: &Vector,
        h_prev: &Vector,
        c_prev: &Vector,
        xhat_prev: &Vector,
    ) -> (Vector, Vector, Vector) {
        let cell = cell_step(&self.decoder, h_prev, c_prev, xhat_prev, Some(z));
        let (_, _, xhat) = self.output_head_step(z, xhat_prev, &cell.hidden);
        (xhat, cell.hidden, cell.cell)
    }

    /// x̂_t = M · relu(A·z + B·x̂_{t-1} + E·ĥ_t); returns (pre, act, x̂_t).
    fn output_head_step(
        &self,
        z: &Vector,
        xhat_prev: &Vector,
        h_t: &Vector,
    ) -> (Vector, Vector, Vector) {
        let oh = &self.output_head;
        let mut pre = matvec(&oh.latent, z);
        pre.add_assign(&matvec(&oh.feedback, xhat_prev));
        pre.add_assign(&matvec(&oh.hidden, h_t));
        let act = relu(&pre);
        let xhat = matvec(&oh.readout, &act);
        (pre, act, xhat)
    }

    /// Rolls the holistic decoder for exactly `steps` steps from z.
    /// The caller supplies the target length; decoding never terminates on
    /// its own.
    pub fn holistic_reconstruct(&self, z: &Vector, steps: usize) -> Matrix {
        assert!(steps >= 1, "holistic_reconstruct: steps must be >= 1");
        let d = self.width();
        let hdim = self.hidden_size();
        let mut out = Matrix::zeros(steps, d);
        let mut h = Vector::zeros(hdim);
        let mut c = Vector::zeros(hdim);
        let mut xhat = Vector::zeros(d);
        for t in 0..steps {
            let (x_t, h_t, c_t) = self.holistic_decode_step(z, &h, &c, &xhat);
            out.row_mut(t).copy_from_slice(x_t.as_slice());
            h = h_t;
            c = c_t;
            xhat = x_t;
        }
        out
    }

    /// Next-observation prediction x̌_{t+1} = P · relu(F · h_t).
    ///
    /// The prediction taken from the final hidden state h_T is a virtual
    /// value that no loss ever consumes.
    pub fn atomistic_predict(&self, h_t: &Vector) -> Vector {
        let ah = &self.atomistic_head;
        matvec(&ah.readout, &relu(&matvec(&ah.hidden, h_t)))
    }

    /// Runs the encoder, and on demand the holistic decoder and atomistic
    /// head, keeping every activation the backward pass needs.
    fn forward_one(&self, s: &Sequence, need_h: bool, need_a: bool) -> Result<SeqForward> {
        check_width(self, s)?;
        let steps = s.len();
        let hdim = self.hidden_size();
        let d = self.width();

        let mut enc: Vec<CellStep> = Vec::with_capacity(steps);
        {
            let zero_h = Vector::zeros(hdim);
            for t in 0..steps {
                let (h_prev, c_prev) = match enc.last() {
                    Some(prev) => (&prev.hidden, &prev.cell),
                    None => (&zero_h, &zero_h),
                };
                enc.push(cell_step(&self.encoder, h_prev, c_prev, &s.observation(t), None));
            }
        }
        let z = enc[steps - 1].hidden.clone();

        let mut loss_h = 0.0;
        let mut dec: Vec<DecStep> = Vec::new();
        if need_h {
            dec.reserve(steps);
            let zero_h = Vector::zeros(hdim);
            let zero_x = Vector::zeros(d);
            let mut sq = 0.0;
            for t in 0..steps {
                let (h_prev, c_prev, xhat_prev) = match dec.last() {
                    Some(prev) => (&prev.cell.hidden, &prev.cell.cell, &prev.xhat),
                    None => (&zero_h, &zero_h, &zero_x),
                };
                let cell = cell_step(&self.decoder, h_prev, c_prev, xhat_prev, Some(&z));
                let (pre, act, xhat) = self.output_head_step(&z, xhat_prev, &cell.hidden);
                sq += xhat.sub(&s.observation(t)).norm_sq();
                dec.push(DecStep { cell, pre, act, xhat });
            }
            loss_h = sq / steps as f64;
        }

        let mut loss_a = 0.0;
        let mut atom: Vec<AtomStep> = Vec::new();
        if need_a {
            if steps < 2 {
                return Err(Error::data(format!(
                    "next-step loss needs at least two observations; sequence '{}' has {}",
                    s.id, steps
                )));
            }
            atom.reserve(steps - 1);
            let ah = &self.atomistic_head;
            let mut sq = 0.0;
            // h_t for t = 1..T-1 predicts x_{t+1}; h_T's prediction is unused.
            for t in 0..steps - 1 {
                let pre = matvec(&ah.hidden, &enc[t].hidden);
                let act = relu(&pre);
                let pred = matvec(&ah.readout, &act);
                sq += pred.sub(&s.observation(t + 1)).norm_sq();
                atom.push(AtomStep { pre, act, pred });
            }
            loss_a = sq / (steps - 1) as f64;
        }

        Ok(SeqForward {
            enc,
            z,
            dec,
            atom,
            loss_h,
            loss_a,
        })
    }

    /// Mean squared whole-sequence reconstruction error, summed over the
    /// batch: Σ_n (1/T⁽ⁿ⁾) Σ_t ‖x̂_t − x_t‖².
    pub fn loss_holistic(&self, batch: &[Sequence]) -> Result<f64> {
        check_batch(batch)?;
        let mut total = 0.0;
        for s in batch {
            total += self.forward_one(s, true, false)?.loss_h;
        }
        Ok(total)
    }

    /// Mean squared next-step prediction error, summed over the batch:
    /// Σ_n (1/(T⁽ⁿ⁾−1)) Σ_{t=2..T} ‖x̌_t − x_t‖². The first observation has
    /// no predictor and the prediction from h_T is virtual, so T-1 terms
    /// enter the sum.
    pub fn loss_atomistic(&self, batch: &[Sequence]) -> Result<f64> {
        check_batch(batch)?;
        let mut total = 0.0;
        for s in batch {
            total += self.forward_one(s, false, true)?.loss_a;
        }
        Ok(total)
    }

    /// alpha-weighted sum of the two reconstruction losses. At the
    /// endpoints this equals the corresponding single loss bit-for-bit.
    pub fn loss_integrated(&self, batch: &[Sequence], alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        check_batch(batch)?;
        let mut lh = 0.0;
        let mut la = 0.0;
        for s in batch {
            let fw = self.forward_one(s, alpha > 0.0, alpha < 1.0)?;
            lh += fw.loss_h;
            la += fw.loss_a;
        }
        Ok(alpha * lh + (1.0 - alpha) * la)
    }

    /// Integrated loss and its exact analytic gradient for a batch.
    ///
    /// Sequences are processed and accumulated in batch order, so the
    /// result is a pure function of (parameters, batch, alpha).
    pub fn backward(&self, batch: &[Sequence], alpha: f64) -> Result<(f64, IsaGradients)> {
        check_alpha(alpha)?;
        check_batch(batch)?;
        let mut grads = IsaGradients::zeros_like(self);
        let mut lh = 0.0;
        let mut la = 0.0;
        for s in batch {
            let fw = self.forward_one(s, alpha > 0.0, alpha < 1.0)?;
            lh += fw.loss_h;
            la += fw.loss_a;
            self.accumulate_one(s, &fw, alpha, &mut grads);
        }
        Ok((alpha * lh + (1.0 - alpha) * la, grads))
    }

    /// `backward` with the batch split into `workers` contiguous chunks
    /// processed on separate threads. Chunk results merge in chunk order,
    /// so the output depends only on (batch, alpha, workers), never on
    /// scheduling. `workers == 1` is exactly `backward`.
    pub fn backward_chunked(
        &self,
        batch: &[Sequence],
        alpha: f64,
        workers: usize,
    ) -> Result<(f64, IsaGradients)> {
        let workers = workers.max(1).min(batch.len().max(1));
        if workers == 1 {
            return self.backward(batch, alpha);
        }
        check_alpha(alpha)?;
        let chunk_len = batch.len().div_ceil(workers);
        let results: Vec<Result<(f64, IsaGradients)>> = std::thread::scope(|scope| {
            let handles: Vec<_> = batch
                .chunks(chunk_len)
                .map(|chunk| scope.spawn(move || self.backward(chunk, alpha)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        });
        let mut loss = 0.0;
        let mut grads = IsaGradients::zeros_like(self);
        for r in results {
            let (l, g) = r?;
            loss += l;
            grads.add_assign(&g);
        }
        Ok((loss, grads))
    }

    /// Backpropagation through time for one sequence, adding into `grads`.
    fn accumulate_one(&self, s: &Sequence, fw: &SeqForward, alpha: f64, grads: &mut IsaGradients) {
        let steps = s.len();
        let hdim = self.hidden_size();
        let d = self.width();
        let zero_h = Vector::zeros(hdim);
        let zero_x = Vector::zeros(d);

        // Gradient on z; fed by the decoder's latent paths, consumed by the
        // encoder at h_T.
        let mut dz = Vector::zeros(hdim);

        if alpha > 0.0 {
            let coeff = alpha * 2.0 / steps as f64;
            // gx[t] / gh[t] collect every contribution to x̂_t and ĥ_t.
            // The loss term is seeded up front; step t+1 adds its share
            // before the loop reaches step t. Index 0 belongs to the
            // constant initial values and is discarded.
            let mut gx: Vec<Vector> = Vec::with_capacity(steps + 1);
            gx.push(Vector::zeros(d));
            for t in 0..steps {
                let mut g = fw.dec[t].xhat.sub(&s.observation(t));
                g.scale(coeff);
                gx.push(g);
            }
            let mut gh: Vec<Vector> = vec![Vector::zeros(hdim); steps + 1];
            let mut gc_carry = Vector::zeros(hdim);
            let oh = &self.output_head;

            for t in (1..=steps).rev() {
                let step = &fw.dec[t - 1];
                let h_prev = if t >= 2 { &fw.dec[t - 2].cell.hidden } else { &zero_h };
                let c_prev = if t >= 2 { &fw.dec[t - 2].cell.cell } else { &zero_h };
                let xhat_prev = if t >= 2 { &fw.dec[t - 2].xhat } else { &zero_x };

                // Output head: x̂_t = M · relu(A·z + B·x̂_{t-1} + E·ĥ_t).
                let (gx_lo, gx_hi) = gx.split_at_mut(t);
                let gx_t = &gx_hi[0];
                grads.output_head.readout.add_outer(gx_t, &step.act);
                let du = relu_backward(matvec_t(&oh.readout, gx_t), &step.pre);
                grads.output_head.latent.add_outer(&du, &fw.z);
                dz.add_assign(&matvec_t(&oh.latent, &du));
                grads.output_head.feedback.add_outer(&du, xhat_prev);
                gx_lo[t - 1].add_assign(&matvec_t(&oh.feedback, &du));
                grads.output_head.hidden.add_outer(&du, &step.cell.hidden);
                gh[t].add_assign(&matvec_t(&oh.hidden, &du));

                // Cell backward; feeds ĥ_{t-1}, x̂_{t-1} and z.
                let (gh_lo, gh_hi) = gh.split_at_mut(t);
                gc_carry = cell_backward(
                    &self.decoder,
                    &mut grads.decoder,
                    &step.cell,
                    h_prev,
                    c_prev,
                    xhat_prev,
                    Some(&fw.z),
                    &gh_hi[0],
                    gc_carry,
                    &mut gh_lo[t - 1],
                    Some(&mut gx_lo[t - 1]),
                    Some(&mut dz),
                );
            }
        }

        // Encoder gradient: atomistic contributions at each h_t, holistic
        // contribution (dz) at h_T, then BPTT through the shared cell.
        let mut gh_enc: Vec<Vector> = vec![Vector::zeros(hdim); steps + 1];
        if alpha < 1.0 {
            let coeff = (1.0 - alpha) * 2.0 / (steps - 1) as f64;
            let ah = &self.atomistic_head;
            for t in 1..steps {
                let a = &fw.atom[t - 1];
                let mut gpred = a.pred.sub(&s.observation(t));
                gpred.scale(coeff);
                grads.atomistic_head.readout.add_outer(&gpred, &a.act);
                let dq = relu_backward(matvec_t(&ah.readout, &gpred), &a.pre);
                grads.atomistic_head.hidden.add_outer(&dq, &fw.enc[t - 1].hidden);
                gh_enc[t].add_assign(&matvec_t(&ah.hidden, &dq));
            }
        }
        gh_enc[steps].add_assign(&dz);

        let mut gc_carry = Vector::zeros(hdim);
        for t in (1..=steps).rev() {
            let step = &fw.enc[t - 1];
            let h_prev = if t >= 2 { &fw.enc[t - 2].hidden } else { &zero_h };
            let c_prev = if t >= 2 { &fw.enc[t - 2].cell } else { &zero_h };
            let (gh_lo, gh_hi) = gh_enc.split_at_mut(t);
            gc_carry = cell_backward(
                &self.encoder,
                &mut grads.encoder,
                step,
                h_prev,
                c_prev,
                &s.observation(t - 1),
                None,
                &gh_hi[0],
                gc_carry,
                &mut gh_lo[t - 1],
                None,
                None,
            );
        }
    }
}

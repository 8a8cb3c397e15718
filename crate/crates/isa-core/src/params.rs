//! Learnable tensors of the integrated autoencoder and their gradients.
//!
//! Both containers expose their tensors by name in one canonical order;
//! the optimizer, the gradient clipper, the checkpoint format and the
//! finite-difference tests all walk that same order.

use crate::linalg::{init_glorot, Matrix, Rng, Vector};

/// One LSTM gate: recurrent map W (H×H), input map U (H×D'), optional
/// latent conditioning map V (H×H, decoder only) and bias b (H).
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub recurrent: Matrix,
    pub input: Matrix,
    pub latent: Option<Matrix>,
    pub bias: Vector,
}

impl GateParams {
    fn zeros(hidden: usize, width: usize, with_latent: bool) -> Self {
        GateParams {
            recurrent: Matrix::zeros(hidden, hidden),
            input: Matrix::zeros(hidden, width),
            latent: with_latent.then(|| Matrix::zeros(hidden, hidden)),
            bias: Vector::zeros(hidden),
        }
    }

    fn glorot(hidden: usize, width: usize, with_latent: bool, rng: &mut Rng) -> Self {
        GateParams {
            recurrent: init_glorot(hidden, hidden, rng),
            input: init_glorot(hidden, width, rng),
            latent: with_latent.then(|| init_glorot(hidden, hidden, rng)),
            bias: Vector::zeros(hidden),
        }
    }
}

/// The four gates of one LSTM cell. Gates use the logistic nonlinearity,
/// the candidate uses tanh so the cell state can carry signed values.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCellParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    pub candidate: GateParams,
}

impl LstmCellParams {
    fn zeros(hidden: usize, width: usize, with_latent: bool) -> Self {
        LstmCellParams {
            input_gate: GateParams::zeros(hidden, width, with_latent),
            forget_gate: GateParams::zeros(hidden, width, with_latent),
            output_gate: GateParams::zeros(hidden, width, with_latent),
            candidate: GateParams::zeros(hidden, width, with_latent),
        }
    }

    fn glorot(hidden: usize, width: usize, with_latent: bool, rng: &mut Rng) -> Self {
        let mut cell = LstmCellParams {
            input_gate: GateParams::glorot(hidden, width, with_latent, rng),
            forget_gate: GateParams::glorot(hidden, width, with_latent, rng),
            output_gate: GateParams::glorot(hidden, width, with_latent, rng),
            candidate: GateParams::glorot(hidden, width, with_latent, rng),
        };
        // Forget-gate bias starts at 1 so early training does not drop the
        // cell memory before gradients have a chance to shape it.
        for b in cell.forget_gate.bias.as_mut_slice() {
            *b = 1.0;
        }
        cell
    }

    pub fn gates(&self) -> [(&'static str, &GateParams); 4] {
        [
            ("input", &self.input_gate),
            ("forget", &self.forget_gate),
            ("output", &self.output_gate),
            ("candidate", &self.candidate),
        ]
    }

    pub fn gates_mut(&mut self) -> [(&'static str, &mut GateParams); 4] {
        [
            ("input", &mut self.input_gate),
            ("forget", &mut self.forget_gate),
            ("output", &mut self.output_gate),
            ("candidate", &mut self.candidate),
        ]
    }
}

/// Reconstruction head of the holistic decoder:
/// x̂_t = readout · relu(latent · z + feedback · x̂_{t-1} + hidden · ĥ_t).
#[derive(Clone, Debug, PartialEq)]
pub struct OutputHeadParams {
    pub readout: Matrix,  // D'×H
    pub latent: Matrix,   // H×H
    pub feedback: Matrix, // H×D'
    pub hidden: Matrix,   // H×H
}

/// Next-step prediction head on the shared encoder:
/// x̌_{t+1} = readout · relu(hidden · h_t).
#[derive(Clone, Debug, PartialEq)]
pub struct AtomisticHeadParams {
    pub readout: Matrix, // D'×H
    pub hidden: Matrix,  // H×H
}

/// All learnable tensors of the integrated model.
///
/// The encoder cell has no latent maps; every decoder gate carries one so
/// the summary representation conditions each decoding step. Both heads
/// use a hidden nonlinearity width equal to the cell hidden size.
#[derive(Clone, Debug, PartialEq)]
pub struct IsaParameters {
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    pub output_head: OutputHeadParams,
    pub atomistic_head: AtomisticHeadParams,
}

/// Gradient of the integrated loss: one tensor per parameter tensor,
/// identical names and shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct IsaGradients {
    pub encoder: LstmCellParams,
    pub decoder: LstmCellParams,
    pub output_head: OutputHeadParams,
    pub atomistic_head: AtomisticHeadParams,
}

/// Read-only view of one named tensor.
#[derive(Clone, Copy)]
pub enum TensorView<'a> {
    Matrix(&'a Matrix),
    Vector(&'a Vector),
}

impl<'a> TensorView<'a> {
    pub fn as_slice(&self) -> &'a [f64] {
        match self {
            TensorView::Matrix(m) => m.as_slice(),
            TensorView::Vector(v) => v.as_slice(),
        }
    }

    /// (rows, cols); vectors report cols = 0.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            TensorView::Matrix(m) => (m.rows(), m.cols()),
            TensorView::Vector(v) => (v.len(), 0),
        }
    }
}

/// Mutable view of one named tensor.
pub enum TensorViewMut<'a> {
    Matrix(&'a mut Matrix),
    Vector(&'a mut Vector),
}

impl TensorViewMut<'_> {
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        match self {
            TensorViewMut::Matrix(m) => m.as_mut_slice(),
            TensorViewMut::Vector(v) => v.as_mut_slice(),
        }
    }
}

fn walk<'a>(
    encoder: &'a LstmCellParams,
    decoder: &'a LstmCellParams,
    output_head: &'a OutputHeadParams,
    atomistic_head: &'a AtomisticHeadParams,
) -> Vec<(String, TensorView<'a>)> {
    let mut out = Vec::with_capacity(34);
    for (prefix, cell) in [("encoder", encoder), ("decoder", decoder)] {
        for (gate, g) in cell.gates() {
            out.push((format!("{prefix}.{gate}.recurrent"), TensorView::Matrix(&g.recurrent)));
            out.push((format!("{prefix}.{gate}.input"), TensorView::Matrix(&g.input)));
            if let Some(v) = &g.latent {
                out.push((format!("{prefix}.{gate}.latent"), TensorView::Matrix(v)));
            }
            out.push((format!("{prefix}.{gate}.bias"), TensorView::Vector(&g.bias)));
        }
    }
    out.push(("output_head.readout".into(), TensorView::Matrix(&output_head.readout)));
    out.push(("output_head.latent".into(), TensorView::Matrix(&output_head.latent)));
    out.push(("output_head.feedback".into(), TensorView::Matrix(&output_head.feedback)));
    out.push(("output_head.hidden".into(), TensorView::Matrix(&output_head.hidden)));
    out.push(("atomistic_head.readout".into(), TensorView::Matrix(&atomistic_head.readout)));
    out.push(("atomistic_head.hidden".into(), TensorView::Matrix(&atomistic_head.hidden)));
    out
}

fn walk_mut<'a>(
    encoder: &'a mut LstmCellParams,
    decoder: &'a mut LstmCellParams,
    output_head: &'a mut OutputHeadParams,
    atomistic_head: &'a mut AtomisticHeadParams,
) -> Vec<(String, TensorViewMut<'a>)> {
    let mut out = Vec::with_capacity(34);
    for (prefix, cell) in [("encoder", encoder), ("decoder", decoder)] {
        for (gate, g) in cell.gates_mut() {
            out.push((
                format!("{prefix}.{gate}.recurrent"),
                TensorViewMut::Matrix(&mut g.recurrent),
            ));
            out.push((format!("{prefix}.{gate}.input"), TensorViewMut::Matrix(&mut g.input)));
            if let Some(v) = &mut g.latent {
                out.push((format!("{prefix}.{gate}.latent"), TensorViewMut::Matrix(v)));
            }
            out.push((format!("{prefix}.{gate}.bias"), TensorViewMut::Vector(&mut g.bias)));
        }
    }
    out.push(("output_head.readout".into(), TensorViewMut::Matrix(&mut output_head.readout)));
    out.push(("output_head.latent".into(), TensorViewMut::Matrix(&mut output_head.latent)));
    out.push(("output_head.feedback".into(), TensorViewMut::Matrix(&mut output_head.feedback)));
    out.push(("output_head.hidden".into(), TensorViewMut::Matrix(&mut output_head.hidden)));
    out.push(("atomistic_head.readout".into(), TensorViewMut::Matrix(&mut atomistic_head.readout)));
    out.push(("atomistic_head.hidden".into(), TensorViewMut::Matrix(&mut atomistic_head.hidden)));
    out
}

impl IsaParameters {
    /// Glorot-uniform matrices, zero biases except forget-gate bias = 1,
    /// deterministic per seed state of `rng`.
    pub fn init(hidden: usize, width: usize, rng: &mut Rng) -> Self {
        assert!(hidden >= 1 && width >= 1, "init: hidden={hidden}, width={width}");
        IsaParameters {
            encoder: LstmCellParams::glorot(hidden, width, false, rng),
            decoder: LstmCellParams::glorot(hidden, width, true, rng),
            output_head: OutputHeadParams {
                readout: init_glorot(width, hidden, rng),
                latent: init_glorot(hidden, hidden, rng),
                feedback: init_glorot(hidden, width, rng),
                hidden: init_glorot(hidden, hidden, rng),
            },
            atomistic_head: AtomisticHeadParams {
                readout: init_glorot(width, hidden, rng),
                hidden: init_glorot(hidden, hidden, rng),
            },
        }
    }

    /// All tensors zero; used by tests exercising degenerate propagation.
    pub fn zeros(hidden: usize, width: usize) -> Self {
        IsaParameters {
            encoder: LstmCellParams::zeros(hidden, width, false),
            decoder: LstmCellParams::zeros(hidden, width, true),
            output_head: OutputHeadParams {
                readout: Matrix::zeros(width, hidden),
                latent: Matrix::zeros(hidden, hidden),
                feedback: Matrix::zeros(hidden, width),
                hidden: Matrix::zeros(hidden, hidden),
            },
            atomistic_head: AtomisticHeadParams {
                readout: Matrix::zeros(width, hidden),
                hidden: Matrix::zeros(hidden, hidden),
            },
        }
    }

    /// Hidden state size H.
    pub fn hidden_size(&self) -> usize {
        self.encoder.input_gate.recurrent.rows()
    }

    /// Input width D' the model was built for (including any stop channel).
    pub fn width(&self) -> usize {
        self.encoder.input_gate.input.cols()
    }

    pub fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        walk(&self.encoder, &self.decoder, &self.output_head, &self.atomistic_head)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        walk_mut(
            &mut self.encoder,
            &mut self.decoder,
            &mut self.output_head,
            &mut self.atomistic_head,
        )
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.as_slice().iter().all(|x| x.is_finite()))
    }

    /// Snaps every entry to its nearest f32 value. Used by the trainer's
    /// single-precision storage mode so checkpoints round-trip exactly.
    pub fn quantize_f32(&mut self) {
        for (_, mut t) in self.tensors_mut() {
            for x in t.as_mut_slice() {
                *x = *x as f32 as f64;
            }
        }
    }
}

impl IsaGradients {
    pub fn zeros_like(p: &IsaParameters) -> Self {
        let hidden = p.hidden_size();
        let width = p.width();
        IsaGradients {
            encoder: LstmCellParams::zeros(hidden, width, false),
            decoder: LstmCellParams::zeros(hidden, width, true),
            output_head: OutputHeadParams {
                readout: Matrix::zeros(width, hidden),
                latent: Matrix::zeros(hidden, hidden),
                feedback: Matrix::zeros(hidden, width),
                hidden: Matrix::zeros(hidden, hidden),
            },
            atomistic_head: AtomisticHeadParams {
                readout: Matrix::zeros(width, hidden),
                hidden: Matrix::zeros(hidden, hidden),
            },
        }
    }

    pub fn tensors(&self) -> Vec<(String, TensorView<'_>)> {
        walk(&self.encoder, &self.decoder, &self.output_head, &self.atomistic_head)
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorViewMut<'_>)> {
        walk_mut(
            &mut self.encoder,
            &mut self.decoder,
            &mut self.output_head,
            &mut self.atomistic_head,
        )
    }

    /// `self += other`, tensor by tensor. Used to merge worker-chunk
    /// gradients in a fixed order.
    pub fn add_assign(&mut self, other: &IsaGradients) {
        let theirs = other.tensors();
        for ((name, mut t), (oname, o)) in self.tensors_mut().into_iter().zip(theirs) {
            debug_assert_eq!(name, oname);
            for (a, b) in t.as_mut_slice().iter_mut().zip(o.as_slice()) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for (_, mut t) in self.tensors_mut() {
            for x in t.as_mut_slice() {
                *x *= c;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.as_slice().iter().all(|x| x.is_finite()))
    }
}

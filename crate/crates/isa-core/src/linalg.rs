//! Dense row-major tensors, element-wise activations, and a seeded RNG.
//!
//! Everything here is deliberately plain: model sizes are tiny (hidden
//! widths up to ~128), so there are no BLAS bindings, no sparse paths and
//! no broadcasting. Shape violations are programming errors and panic with
//! a shape report; fallible validation happens at the module boundaries
//! that consume user data.

use std::fmt;

/// Dense matrix, row-major `data[r * cols + c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from row-major data; panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "matrix data length {} does not match shape {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c, "row {i} has width {} expected {c}", row.len());
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies row `r` out as a vector.
    pub fn row_vector(&self, r: usize) -> Vector {
        Vector::from_slice(self.row(r))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Accumulates the outer product `a bᵀ` into self: `self[i][j] += a[i] * b[j]`.
    pub fn add_outer(&mut self, a: &Vector, b: &Vector) {
        assert_eq!(
            (self.rows, self.cols),
            (a.len(), b.len()),
            "outer product {}x{} does not fit matrix {}x{}",
            a.len(),
            b.len(),
            self.rows,
            self.cols
        );
        for (i, row) in self.data.chunks_exact_mut(self.cols).enumerate() {
            let ai = a.data[i];
            if ai != 0.0 {
                for (m, bj) in row.iter_mut().zip(&b.data) {
                    *m += ai * bj;
                }
            }
        }
    }
}

impl fmt::Display for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{})", self.rows, self.cols)
    }
}

/// Dense vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn zeros(len: usize) -> Self {
        Vector { data: vec![0.0; len] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Vector { data: data.to_vec() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn set(&mut self, i: usize, v: f64) {
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Vector) {
        assert_eq!(self.len(), other.len(), "add: {} vs {}", self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "axpy: {} vs {}", self.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.data {
            *a *= c;
        }
    }

    /// `self - other` as a new vector.
    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "sub: {} vs {}", self.len(), other.len());
        Vector::from_vec(self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect())
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `m · v`, panics with a shape report when `m.cols != v.len`.
pub fn matvec(m: &Matrix, v: &Vector) -> Vector {
    assert_eq!(
        m.cols,
        v.len(),
        "matvec: matrix {}x{} applied to vector of length {}",
        m.rows,
        m.cols,
        v.len()
    );
    let out = m
        .data
        .chunks_exact(m.cols)
        .map(|row| row.iter().zip(&v.data).map(|(a, b)| a * b).sum())
        .collect();
    Vector::from_vec(out)
}

/// `mᵀ · v`, panics when `m.rows != v.len`. Workhorse of the backward pass.
pub fn matvec_t(m: &Matrix, v: &Vector) -> Vector {
    assert_eq!(
        m.rows,
        v.len(),
        "matvec_t: matrix {}x{} transposed applied to vector of length {}",
        m.rows,
        m.cols,
        v.len()
    );
    let mut out = vec![0.0; m.cols];
    for (row, vi) in m.data.chunks_exact(m.cols).zip(&v.data) {
        if *vi != 0.0 {
            for (o, mij) in out.iter_mut().zip(row) {
                *o += vi * mij;
            }
        }
    }
    Vector::from_vec(out)
}

/// Numerically stable logistic function.
///
/// Branches on sign so that `exp` is only ever taken of a non-positive
/// argument; large positive and negative inputs saturate to 1 and 0
/// without overflow.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        1.0 / (1.0 + e)
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Element-wise logistic function.
pub fn sigmoid(v: &Vector) -> Vector {
    Vector::from_vec(v.data.iter().map(|&x| sigmoid_scalar(x)).collect())
}

/// Element-wise hyperbolic tangent.
pub fn tanh_act(v: &Vector) -> Vector {
    Vector::from_vec(v.data.iter().map(|x| x.tanh()).collect())
}

/// Element-wise rectifier `max(0, x)`.
pub fn relu(v: &Vector) -> Vector {
    Vector::from_vec(v.data.iter().map(|x| x.max(0.0)).collect())
}

/// Element-wise product; panics on length mismatch.
pub fn hadamard(a: &Vector, b: &Vector) -> Vector {
    assert_eq!(
        a.len(),
        b.len(),
        "hadamard: lengths {} and {} differ",
        a.len(),
        b.len()
    );
    Vector::from_vec(a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect())
}

/// Seeded splitmix64 generator.
///
/// Own implementation rather than a platform default so that every draw
/// sequence is reproducible bit-for-bit across platforms. The state is a
/// counter advanced by the golden-ratio increment; each output is an
/// avalanche mix of the counter.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`, unbiased via rejection.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn int_range(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi, "int_range: {lo} > {hi}");
        lo + self.below((hi - lo + 1) as u64) as usize
    }

    /// Standard normal via Box–Muller; consumes two uniforms per draw.
    pub fn normal(&mut self) -> f64 {
        // Shift into (0, 1) so the log is finite.
        let u1 = ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below((i + 1) as u64) as usize;
            xs.swap(i, j);
        }
    }
}

/// Glorot-uniform initialization: entries uniform in ±sqrt(6 / (rows + cols)).
pub fn init_glorot(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "init_glorot: empty shape {rows}x{cols}");
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.range(-bound, bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_identity_and_zeros() {
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(matvec(&Matrix::identity(3), &v).as_slice(), &[1.0, 2.0, 3.0]);
        let z = matvec(&Matrix::zeros(2, 3), &Vector::from_vec(vec![5.0, 5.0, 5.0]));
        assert_eq!(z.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn matvec_hand_computed() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let r = matvec(&m, &Vector::from_vec(vec![1.0, 1.0]));
        assert_eq!(r.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    #[should_panic(expected = "matvec: matrix 2x3 applied to vector of length 2")]
    fn matvec_shape_mismatch_reports_shapes() {
        matvec(&Matrix::zeros(2, 3), &Vector::zeros(2));
    }

    #[test]
    fn matvec_distributes_over_addition() {
        let mut rng = Rng::new(11);
        for _ in 0..50 {
            let m = init_glorot(5, 7, &mut rng);
            let a = Vector::from_vec((0..7).map(|_| rng.range(-2.0, 2.0)).collect());
            let b = Vector::from_vec((0..7).map(|_| rng.range(-2.0, 2.0)).collect());
            let mut ab = a.clone();
            ab.add_assign(&b);
            let lhs = matvec(&m, &ab);
            let mut rhs = matvec(&m, &a);
            rhs.add_assign(&matvec(&m, &b));
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn matvec_t_agrees_with_explicit_transpose() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let v = Vector::from_vec(vec![1.0, 0.5, -1.0]);
        let r = matvec_t(&m, &v);
        // transpose rows: [1,3,5], [2,4,6]
        assert!((r.get(0) - (1.0 + 1.5 - 5.0)).abs() < 1e-15);
        assert!((r.get(1) - (2.0 + 2.0 - 6.0)).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_symmetry_point_and_saturation() {
        assert_eq!(sigmoid(&Vector::from_vec(vec![0.0])).get(0), 0.5);
        let hi = sigmoid(&Vector::from_vec(vec![1000.0])).get(0);
        assert_eq!(hi, 1.0);
        assert!(hi.is_finite());
        let lo = sigmoid(&Vector::from_vec(vec![-1000.0])).get(0);
        assert_eq!(lo, 0.0);
    }

    #[test]
    fn sigmoid_high_precision_value() {
        // 1/(1+e^-1) evaluated at 30 digits: 0.731058578630004879251159241822
        let s = sigmoid_scalar(1.0);
        assert!((s - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_complement_identity() {
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            let x = rng.range(-40.0, 40.0);
            let s = sigmoid_scalar(x) + sigmoid_scalar(-x);
            assert!((s - 1.0).abs() <= 1e-12, "x={x}, sum={s}");
        }
    }

    #[test]
    fn elementwise_activations() {
        assert_eq!(tanh_act(&Vector::from_vec(vec![0.0])).get(0), 0.0);
        assert_eq!(relu(&Vector::from_vec(vec![-2.0, 3.0])).as_slice(), &[0.0, 3.0]);
        let h = hadamard(
            &Vector::from_vec(vec![1.0, 2.0]),
            &Vector::from_vec(vec![3.0, 4.0]),
        );
        assert_eq!(h.as_slice(), &[3.0, 8.0]);
    }

    #[test]
    #[should_panic(expected = "hadamard")]
    fn hadamard_length_mismatch() {
        hadamard(&Vector::zeros(2), &Vector::zeros(3));
    }

    #[test]
    fn glorot_deterministic_and_bounded() {
        let a = init_glorot(13, 7, &mut Rng::new(42));
        let b = init_glorot(13, 7, &mut Rng::new(42));
        assert_eq!(a, b);
        let bound = (6.0 / 20.0f64).sqrt();
        assert!(a.as_slice().iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn glorot_mean_near_zero() {
        // Uniform on ±a has std a/sqrt(3); the mean of n draws has standard
        // error a/sqrt(3n). Require |mean| <= 3 standard errors.
        let m = init_glorot(100, 100, &mut Rng::new(7));
        let n = 10_000.0;
        let a = (6.0 / 200.0f64).sqrt();
        let mean: f64 = m.as_slice().iter().sum::<f64>() / n;
        assert!(mean.abs() <= 3.0 * a / (3.0 * n).sqrt(), "mean {mean}");
    }

    #[test]
    fn rng_reproducible_and_normal_sane() {
        let mut a = Rng::new(123);
        let mut b = Rng::new(123);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut r = Rng::new(5);
        let n = 20_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = r.normal();
            assert!(x.is_finite());
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut xs: Vec<usize> = (0..50).collect();
        Rng::new(9).shuffle(&mut xs);
        let mut sorted = xs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(xs, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn below_is_in_range() {
        let mut r = Rng::new(17);
        for _ in 0..1000 {
            assert!(r.below(7) < 7);
        }
    }
}

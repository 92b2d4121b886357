//! Alternative binding operators: vector-derived transformation binding
//! (VTB), its QR-orthogonal variant (iVTB), and a Hilbert-curve
//! linearization composed with 1D HRR.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::images::smooth_image;
use crate::rng::{gaussian_tensor, standard_normals, RngStream};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::vsa::{bind, cosine, sample_secret, unbind, Secret};

/// Tolerance on `B^T B - I` for a block to count as orthogonal.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

fn square_side(d: usize) -> Result<usize> {
    let m = (d as f64).sqrt().round() as usize;
    if m == 0 || m * m != d {
        return Err(Error::Dimension(format!("{d} is not a perfect square")));
    }
    Ok(m)
}

/// VTB key: the vector and its `m x m` block `d^(1/4) * reshape(vector)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VtbSecret<T: Scalar = f64> {
    vector: Tensor<T>,
    block: Vec<T>,
    side: usize,
    orthogonal: bool,
}

impl<T: Scalar> VtbSecret<T> {
    pub fn from_vector(vector: Tensor<T>) -> Result<Self> {
        if vector.ndim() != 1 {
            return Err(Error::Dimension(format!(
                "VTB secrets are vectors, got dims {:?}",
                vector.dims()
            )));
        }
        let d = vector.len();
        let side = square_side(d)?;
        let scale = T::of((d as f64).powf(0.25));
        let block: Vec<T> = vector.data().iter().map(|&v| v * scale).collect();
        let orthogonal = is_orthogonal_block(&block, side);
        Ok(Self {
            vector,
            block,
            side,
            orthogonal,
        })
    }

    pub fn vector(&self) -> &Tensor<T> {
        &self.vector
    }

    /// Row-major `m x m` block.
    pub fn block(&self) -> &[T] {
        &self.block
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    fn apply(&self, x: &Tensor<T>, transpose: bool) -> Result<Tensor<T>> {
        if x.ndim() != 1 {
            return Err(Error::Dimension(format!("VTB binds vectors, got dims {:?}", x.dims())));
        }
        let m = square_side(x.len())?;
        if m != self.side {
            return Err(Error::shape(format!(
                "vector of length {} does not match secret of length {}",
                x.len(),
                self.vector.len()
            )));
        }
        let mut out = vec![T::zero(); x.len()];
        for (chunk_in, chunk_out) in x.data().chunks_exact(m).zip(out.chunks_exact_mut(m)) {
            for (r, o) in chunk_out.iter_mut().enumerate() {
                *o = (0..m)
                    .map(|c| {
                        let a = if transpose {
                            self.block[c * m + r]
                        } else {
                            self.block[r * m + c]
                        };
                        a * chunk_in[c]
                    })
                    .sum();
            }
        }
        Ok(Tensor::from_parts(x.dims().to_vec(), out))
    }
}

/// `B^T B == I` within `ORTHOGONALITY_TOLERANCE`.
fn is_orthogonal_block<T: Scalar>(block: &[T], m: usize) -> bool {
    (0..m).all(|i| {
        (0..m).all(|j| {
            let dot: f64 = (0..m).map(|r| block[r * m + i].as_f64() * block[r * m + j].as_f64()).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            (dot - target).abs() <= ORTHOGONALITY_TOLERANCE
        })
    })
}

/// Block-diagonal product: each consecutive `m`-chunk of `x` times the block.
pub fn vtb_bind<T: Scalar>(x: &Tensor<T>, y: &VtbSecret<T>) -> Result<Tensor<T>> {
    y.apply(x, false)
}

/// Applies the transposed block per chunk. Exact for orthogonal blocks.
pub fn vtb_unbind<T: Scalar>(z: &Tensor<T>, y: &VtbSecret<T>) -> Result<Tensor<T>> {
    y.apply(z, true)
}

/// Plain VTB key with `N(0, 1/d)` entries.
pub fn vtb_secret<T: Scalar>(d: usize, stream: &RngStream) -> Result<(VtbSecret<T>, RngStream)> {
    square_side(d)?;
    let (v, next) = gaussian_tensor::<T>(&[d], 1.0 / d as f64, stream)?;
    Ok((VtbSecret::from_vector(v)?, next))
}

/// iVTB key: the orthogonal QR factor of an `m x m` Gaussian draw, with the
/// signs fixed so that `R` has a positive diagonal.
pub fn ivtb_secret<T: Scalar>(d: usize, stream: &RngStream) -> Result<(VtbSecret<T>, RngStream)> {
    let m = square_side(d)?;
    let (values, next) = stream.draw(|rng| standard_normals(rng, d));
    let a = DMatrix::from_row_slice(m, m, &values);
    let qr = a.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let scale = (d as f64).powf(-0.25);
    let mut block = Vec::with_capacity(d);
    let mut vector = Vec::with_capacity(d);
    for i in 0..m {
        for j in 0..m {
            block.push(T::of(q[(i, j)]));
            vector.push(T::of(q[(i, j)] * scale));
        }
    }
    Ok((
        VtbSecret {
            vector: Tensor::from_parts(vec![d], vector),
            block,
            side: m,
            orthogonal: true,
        },
        next,
    ))
}

/// Hilbert curve over a `2^order x 2^order` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertMap {
    order: u32,
    side: usize,
    /// rank -> cell (`row * side + col`)
    forward: Vec<usize>,
    /// cell -> rank
    inverse: Vec<usize>,
}

impl HilbertMap {
    pub fn new(order: u32) -> Self {
        let side = 1usize << order;
        let n = side * side;
        let mut forward = Vec::with_capacity(n);
        let mut inverse = vec![0; n];
        for rank in 0..n {
            let (row, col) = rank_to_cell(side, rank);
            let cell = row * side + col;
            inverse[cell] = rank;
            forward.push(cell);
        }
        Self {
            order,
            side,
            forward,
            inverse,
        }
    }

    /// Smallest curve covering an `h x w` grid.
    pub fn covering(h: usize, w: usize) -> Self {
        let side = h.max(w).max(1).next_power_of_two();
        Self::new(side.trailing_zeros())
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cell(&self, rank: usize) -> (usize, usize) {
        let c = self.forward[rank];
        (c / self.side, c % self.side)
    }

    pub fn rank(&self, row: usize, col: usize) -> usize {
        self.inverse[row * self.side + col]
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

fn rank_to_cell(side: usize, rank: usize) -> (usize, usize) {
    let (mut x, mut y) = (0usize, 0usize);
    let mut t = rank;
    let mut s = 1;
    while s < side {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

/// Linearizes a 2D image along the Hilbert curve, zero-padding to the next
/// power-of-two side.
pub fn hilbert_encode<T: Scalar>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = match *img.dims() {
        [h, w] => (h, w),
        _ => return Err(Error::shape(format!("expected a 2D image, got {:?}", img.dims()))),
    };
    let map = HilbertMap::covering(h, w);
    let data = (0..map.len())
        .map(|rank| {
            let (r, c) = map.cell(rank);
            if r < h && c < w {
                img.data()[r * w + c]
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(Tensor::from_parts(vec![map.len()], data))
}

/// Inverse of [`hilbert_encode`], cropping back to `h x w`.
pub fn hilbert_decode<T: Scalar>(v: &Tensor<T>, h: usize, w: usize) -> Result<Tensor<T>> {
    let map = HilbertMap::covering(h, w);
    if v.dims() != [map.len()] {
        return Err(Error::shape(format!(
            "a {h}x{w} image decodes from {} values, got dims {:?}",
            map.len(),
            v.dims()
        )));
    }
    let mut out = vec![T::zero(); h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = v.data()[map.rank(r, c)];
        }
    }
    Ok(Tensor::from_parts(vec![h, w], out))
}

/// Hilbert-linearizes each channel and binds it with the shared 1D secret.
/// Returns one bound vector per channel.
pub fn hilbert_hrr_bind<T: Scalar>(img: &Tensor<T>, s1d: &Secret<T>) -> Result<Vec<Tensor<T>>> {
    let (_, _, d) = img.plane_dims()?;
    (0..d)
        .map(|c| {
            let enc = hilbert_encode(&img.channel(c)?)?;
            if enc.dims() != s1d.dims() {
                return Err(Error::shape(format!(
                    "encoded length {} does not match secret dims {:?}",
                    enc.len(),
                    s1d.dims()
                )));
            }
            bind(&enc, s1d)
        })
        .collect()
}

/// Unbinds each channel vector and decodes back to an `h x w` (x D) image.
pub fn hilbert_hrr_unbind<T: Scalar>(
    bound: &[Tensor<T>],
    s1d: &Secret<T>,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let planes = bound
        .iter()
        .map(|b| hilbert_decode(&unbind(b, s1d)?, h, w))
        .collect::<Result<Vec<_>>>()?;
    Tensor::from_channels(&planes, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BindOperator {
    Hrr2d,
    Hrr1d,
    Vtb,
    Ivtb,
    Hilbert,
}

impl BindOperator {
    pub const ALL: [BindOperator; 5] = [
        BindOperator::Hrr2d,
        BindOperator::Hrr1d,
        BindOperator::Vtb,
        BindOperator::Ivtb,
        BindOperator::Hilbert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BindOperator::Hrr2d => "hrr2d",
            BindOperator::Hrr1d => "hrr1d",
            BindOperator::Vtb => "vtb",
            BindOperator::Ivtb => "ivtb",
            BindOperator::Hilbert => "hilbert",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|op| op.name() == name)
            .ok_or_else(|| Error::param(format!("unknown operator {name:?}")))
    }
}

/// Key for binding tensors of shape `dims` under `op`, as a plain tensor
/// suitable for a file. HRR-2D keys match `dims`; HRR-1D and VTB keys are
/// vectors over the flattened input; Hilbert keys cover the padded curve.
pub fn operator_secret(op: BindOperator, dims: &[usize], stream: &RngStream) -> Result<Tensor<f64>> {
    let n: usize = dims.iter().product();
    Ok(match op {
        BindOperator::Hrr2d => sample_secret::<f64>(dims, stream)?.0.into_tensor(),
        BindOperator::Hrr1d => sample_secret::<f64>(&[n], stream)?.0.into_tensor(),
        BindOperator::Vtb => vtb_secret::<f64>(n, stream)?.0.vector().clone(),
        BindOperator::Ivtb => ivtb_secret::<f64>(n, stream)?.0.vector().clone(),
        BindOperator::Hilbert => {
            let (h, w) = match *dims {
                [h, w] | [h, w, _] => (h, w),
                _ => return Err(Error::shape(format!("Hilbert binding needs an image, got dims {dims:?}"))),
            };
            let side = HilbertMap::covering(h, w).side();
            sample_secret::<f64>(&[side * side], stream)?.0.into_tensor()
        }
    })
}

fn reshape_like(flat: Tensor<f64>, dims: &[usize]) -> Result<Tensor<f64>> {
    flat.reshape(dims.to_vec())
}

/// Binds `x` under `op` with a key produced by [`operator_secret`]. Vector
/// operators act on the flattened input and keep its shape; Hilbert binding
/// stores each channel's bound curve as a `side x side` plane.
pub fn operator_bind(op: BindOperator, x: &Tensor<f64>, key: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    match op {
        BindOperator::Hrr2d => bind(x, &Secret::from_tensor(key.clone(), seed)?),
        BindOperator::Hrr1d => reshape_like(bind(&x.flattened(), &Secret::from_tensor(key.clone(), seed)?)?, x.dims()),
        BindOperator::Vtb | BindOperator::Ivtb => {
            reshape_like(vtb_bind(&x.flattened(), &VtbSecret::from_vector(key.clone())?)?, x.dims())
        }
        BindOperator::Hilbert => {
            let s = Secret::from_tensor(key.clone(), seed)?;
            let side = square_side(key.len())?;
            let planes = hilbert_hrr_bind(x, &s)?
                .into_iter()
                .map(|v| v.reshape(vec![side, side]))
                .collect::<Result<Vec<_>>>()?;
            Tensor::from_channels(&planes, x.ndim() == 2)
        }
    }
}

/// Inverse of [`operator_bind`]. For Hilbert binding `crop` restores the
/// original `h x w` when the input was padded.
pub fn operator_unbind(
    op: BindOperator,
    b: &Tensor<f64>,
    key: &Tensor<f64>,
    seed: u64,
    crop: Option<(usize, usize)>,
) -> Result<Tensor<f64>> {
    match op {
        BindOperator::Hrr2d => unbind(b, &Secret::from_tensor(key.clone(), seed)?),
        BindOperator::Hrr1d => reshape_like(unbind(&b.flattened(), &Secret::from_tensor(key.clone(), seed)?)?, b.dims()),
        BindOperator::Vtb | BindOperator::Ivtb => {
            reshape_like(vtb_unbind(&b.flattened(), &VtbSecret::from_vector(key.clone())?)?, b.dims())
        }
        BindOperator::Hilbert => {
            let s = Secret::from_tensor(key.clone(), seed)?;
            let (side, _, d) = b.plane_dims()?;
            let (h, w) = crop.unwrap_or((side, side));
            let curves = (0..d)
                .map(|c| Ok(b.channel(c)?.flattened()))
                .collect::<Result<Vec<_>>>()?;
            let out = hilbert_hrr_unbind(&curves, &s, h, w)?;
            if b.ndim() == 3 {
                out.reshape(vec![h, w, d])
            } else {
                Ok(out)
            }
        }
    }
}

/// Bind and unbind of one single-channel square image under `op`, with the
/// secret drawn from `stream`. Returns `(bound, recovered)`.
pub fn bind_round_trip(
    op: BindOperator,
    img: &Tensor<f64>,
    stream: &RngStream,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let (h, w) = match *img.dims() {
        [h, w] => (h, w),
        _ => return Err(Error::shape("round trip expects a 2D image")),
    };
    let flat = img.flattened();
    match op {
        BindOperator::Hrr2d => {
            let (s, _) = sample_secret::<f64>(img.dims(), stream)?;
            let b = bind(img, &s)?;
            let back = unbind(&b, &s)?;
            Ok((b.flattened(), back))
        }
        BindOperator::Hrr1d => {
            let (s, _) = sample_secret::<f64>(&[h * w], stream)?;
            let b = bind(&flat, &s)?;
            let back = unbind(&b, &s)?.reshape(vec![h, w])?;
            Ok((b, back))
        }
        BindOperator::Vtb | BindOperator::Ivtb => {
            let (s, _) = if op == BindOperator::Vtb {
                vtb_secret::<f64>(h * w, stream)?
            } else {
                ivtb_secret::<f64>(h * w, stream)?
            };
            let b = vtb_bind(&flat, &s)?;
            let back = vtb_unbind(&b, &s)?.reshape(vec![h, w])?;
            Ok((b, back))
        }
        BindOperator::Hilbert => {
            let side = HilbertMap::covering(h, w).side();
            let (s, _) = sample_secret::<f64>(&[side * side], stream)?;
            let mut bound = hilbert_hrr_bind(img, &s)?;
            let back = hilbert_hrr_unbind(&bound, &s, h, w)?;
            let b = bound.remove(0);
            Ok((b, back))
        }
    }
}

/// One row of the operator comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub operator: BindOperator,
    pub reconstruction_cosine: f64,
    pub bound_input_cosine: f64,
}

/// Mean reconstruction cosine and mean |cosine(bound, input)| per operator over
/// `trials` smooth `side x side` images.
pub fn ablation_experiment(
    ops: &[BindOperator],
    side: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if trials == 0 {
        return Err(Error::param("ablation needs at least one trial"));
    }
    let root = RngStream::new(seed);
    ops.iter()
        .map(|&op| {
            let (mut rec, mut leak) = (0.0, 0.0);
            for t in 0..trials {
                let (img, next) = smooth_image(&[side, side], &root.derive(&[0, t as u64]))?;
                let (bound, back) = bind_round_trip(op, &img, &next)?;
                rec += cosine(&img, &back)?;
                let reference = match op {
                    BindOperator::Hilbert => hilbert_encode(&img)?,
                    _ => img.flattened(),
                };
                let reference = if reference.len() == bound.len() {
                    reference
                } else {
                    img.flattened()
                };
                leak += cosine(&reference, &bound)?.abs();
            }
            Ok(AblationRow {
                operator: op,
                reconstruction_cosine: rec / trials as f64,
                bound_input_cosine: leak / trials as f64,
            })
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("operator,reconstruction_cosine,bound_input_cosine\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:.6},{:.6}\n",
            r.operator.name(),
            r.reconstruction_cosine,
            r.bound_input_cosine
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_secret(d: usize) -> VtbSecret<f64> {
        let m = square_side(d).unwrap();
        let scale = (d as f64).powf(-0.25);
        let v = Tensor::from_fn(&[d], |i| if i / m == i % m { scale } else { 0.0 });
        VtbSecret::from_vector(v).unwrap()
    }

    #[test]
    fn identity_block_is_identity() {
        let x = Tensor::<f64>::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = identity_secret(4);
        assert!(vtb_bind(&x, &y).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
        assert!(vtb_unbind(&x, &y).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
    }

    #[test]
    fn permutation_block_swaps_pairs() {
        let s = 4f64.powf(-0.25);
        let y = VtbSecret::from_vector(Tensor::new(vec![4], vec![0.0, s, s, 0.0]).unwrap()).unwrap();
        let x = Tensor::<f64>::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let z = vtb_bind(&x, &y).unwrap();
        let expected = [2.0, 1.0, 4.0, 3.0];
        for (a, b) in z.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(
            VtbSecret::from_vector(Tensor::<f64>::zeros(&[5])),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(ivtb_secret::<f64>(12, &RngStream::new(1)), Err(Error::Dimension(_))));
    }

    #[test]
    fn ivtb_block_is_orthogonal_with_unit_determinant() {
        let (s, _) = ivtb_secret::<f64>(4, &RngStream::new(3)).unwrap();
        let q = DMatrix::from_row_slice(2, 2, s.block());
        let qtq = q.transpose() * &q;
        assert!((qtq - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((q.determinant().abs() - 1.0).abs() < 1e-9);
        let (a, _) = ivtb_secret::<f64>(64, &RngStream::new(8)).unwrap();
        let (b, _) = ivtb_secret::<f64>(64, &RngStream::new(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ivtb_retrieval_is_exact() {
        let (s, next) = ivtb_secret::<f64>(64, &RngStream::new(4)).unwrap();
        let (x, _) = gaussian_tensor::<f64>(&[64], 1.0, &next).unwrap();
        let back = vtb_unbind(&vtb_bind(&x, &s).unwrap(), &s).unwrap();
        assert!(back.max_abs_diff(&x).unwrap() <= 1e-9);
    }

    /// Independent construction: the order-k curve is four copies of the
    /// order-(k-1) curve, the first transposed, the last anti-transposed.
    fn recursive_curve(order: u32) -> Vec<(usize, usize)> {
        if order == 0 {
            return vec![(0, 0)];
        }
        let prev = recursive_curve(order - 1);
        let half = 1usize << (order - 1);
        let mut out = Vec::new();
        out.extend(prev.iter().map(|&(r, c)| (c, r)));
        out.extend(prev.iter().map(|&(r, c)| (r, c + half)));
        out.extend(prev.iter().map(|&(r, c)| (r + half, c + half)));
        out.extend(prev.iter().map(|&(r, c)| (2 * half - 1 - c, half - 1 - r)));
        out
    }

    #[test]
    fn matches_recursive_construction() {
        assert_eq!(recursive_curve(1), vec![(0, 0), (0, 1), (1, 1), (1, 0)]);
        for order in 1..=5 {
            let map = HilbertMap::new(order);
            let cells: Vec<_> = (0..map.len()).map(|r| map.cell(r)).collect();
            assert_eq!(cells, recursive_curve(order), "order {order}");
        }
    }

    #[test]
    fn order_one_visit_order() {
        let img = Tensor::<f64>::new(vec![2, 2], vec![1.0, 2.0, 4.0, 3.0]).unwrap();
        assert_eq!(hilbert_encode(&img).unwrap().data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn padding_round_trip() {
        let img = Tensor::<f64>::from_fn(&[5, 7], |i| i as f64 + 1.0);
        let enc = hilbert_encode(&img).unwrap();
        assert_eq!(enc.len(), 64);
        assert_eq!(enc.data().iter().filter(|&&v| v == 0.0).count(), 64 - 35);
        assert_eq!(hilbert_decode(&enc, 5, 7).unwrap(), img);
    }

    #[test]
    fn hilbert_hrr_channels_are_independent() {
        let (img, next) = gaussian_tensor::<f64>(&[16, 16, 3], 1.0, &RngStream::new(5)).unwrap();
        let (s, _) = sample_secret::<f64>(&[256], &next).unwrap();
        let bound = hilbert_hrr_bind(&img, &s).unwrap();
        assert_eq!(bound.len(), 3);
        let solo = hilbert_hrr_bind(&img.channel(1).unwrap(), &s).unwrap();
        assert_eq!(solo[0], bound[1]);
        let back = hilbert_hrr_unbind(&bound, &s, 16, 16).unwrap();
        assert!(back.max_abs_diff(&img).unwrap() <= 1e-9);
    }

    #[test]
    fn operator_names_round_trip() {
        for op in BindOperator::ALL {
            assert_eq!(BindOperator::parse(op.name()).unwrap(), op);
        }
        assert!(BindOperator::parse("xor").is_err());
    }
}

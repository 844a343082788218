//! Principal component subspace of vectorized representation images.
//!
//! Images are flattened row-wise and stacked as samples. The basis is computed
//! from the d x d Gram matrix of the (centered) training data, which is much
//! cheaper than a p x p covariance when p (pixels) far exceeds d (recordings).

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cvd::RepresentationKind;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"MDPC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModel {
    pub representation: RepresentationKind,
    /// Input dimension (pixels per image).
    pub p: usize,
    /// Number of training samples.
    pub d: usize,
    /// Training mean, present when the data were centered.
    pub mean: Option<Array1<f64>>,
    /// p x λ, orthonormal columns.
    pub basis: Array2<f64>,
    /// Covariance eigenvalues of the kept components, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Sum of all covariance eigenvalues (trace of the sample covariance).
    pub total_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceFeatures {
    pub projections: Vec<f64>,
}

impl SubspaceModel {
    pub fn lambda(&self) -> usize {
        self.basis.ncols()
    }

    pub fn is_centered(&self) -> bool {
        self.mean.is_some()
    }

    /// Copy keeping only the first `lambda` components.
    pub fn truncated(&self, lambda: usize) -> Result<Self> {
        if lambda == 0 || lambda > self.lambda() {
            return Err(Error::OutOfRange(format!("lambda {lambda} not in 1..={}", self.lambda())));
        }
        Ok(Self {
            basis: self.basis.slice(ndarray::s![.., ..lambda]).to_owned(),
            eigenvalues: self.eigenvalues[..lambda].to_vec(),
            ..self.clone()
        })
    }
}

/// Flatten an image row by row.
pub fn vectorize(image: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(image.iter().copied())
}

/// Fit on representation images of kind `kind`; all must share its dimensions.
pub fn fit(images: &[Array2<f64>], kind: RepresentationKind, lambda: usize, center: bool) -> Result<SubspaceModel> {
    let (r, c) = kind.dims();
    for img in images {
        if img.dim() != (r, c) {
            return Err(Error::DimensionMismatch { expected: r * c, got: img.len() });
        }
    }
    let mut data = Array2::zeros((images.len(), r * c));
    for (mut row, img) in data.axis_iter_mut(Axis(0)).zip(images) {
        row.iter_mut().zip(img.iter()).for_each(|(dst, &v)| *dst = v);
    }
    fit_rows(data.view(), kind, lambda, center)
}

/// Fit on pre-vectorized samples, one per row (d x p).
pub fn fit_rows(data: ArrayView2<f64>, kind: RepresentationKind, lambda: usize, center: bool) -> Result<SubspaceModel> {
    let (r, c) = kind.dims();
    if data.ncols() != r * c {
        return Err(Error::DimensionMismatch { expected: r * c, got: data.ncols() });
    }
    let pc = principal_components(data, lambda, center)?;
    Ok(SubspaceModel {
        representation: kind,
        p: data.ncols(),
        d: data.nrows(),
        mean: pc.mean,
        basis: pc.basis,
        eigenvalues: pc.eigenvalues,
        total_variance: pc.total_variance,
    })
}

/// Leading principal components of arbitrary d x p data.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponents {
    pub mean: Option<Array1<f64>>,
    /// p x λ, orthonormal columns.
    pub basis: Array2<f64>,
    /// σ_i² / (d - 1) for the singular values σ_i of the (centered) data.
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
}

pub fn principal_components(data: ArrayView2<f64>, lambda: usize, center: bool) -> Result<PrincipalComponents> {
    let (d, p) = data.dim();
    if d < 2 {
        return Err(Error::TooShort { needed: 2, got: d });
    }
    if lambda == 0 || lambda > p.min(d) {
        return Err(Error::OutOfRange(format!("lambda {lambda} not in 1..={}", p.min(d))));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training images"));
    }
    let (y, mean) = if center {
        let m = data.mean_axis(Axis(0)).expect("d >= 2");
        (&data - &m, Some(m))
    } else {
        (data.to_owned(), None)
    };

    let gram = y.dot(&y.t());
    let g = DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
    let eig = SymmetricEigen::new(g);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let scale = (d - 1) as f64;
    let total_variance = y.iter().map(|v| v * v).sum::<f64>() / scale;
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut basis = Array2::<f64>::zeros((p, lambda));
    let mut eigenvalues = Vec::with_capacity(lambda);
    for (col, &k) in order.iter().take(lambda).enumerate() {
        let s2 = eig.eigenvalues[k].max(0.0);
        eigenvalues.push(s2 / scale);
        // Directions with (numerically) zero variance are filled in below.
        if top > 0.0 && s2 > top * 1e-13 {
            let v = Array1::from_iter(eig.eigenvectors.column(k).iter().copied());
            let u = y.t().dot(&v) / s2.sqrt();
            basis.column_mut(col).assign(&u);
        }
    }
    orthonormalize(&mut basis);
    for mut col in basis.columns_mut() {
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        if col[imax] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
    Ok(PrincipalComponents { mean, basis, eigenvalues, total_variance })
}

/// Modified Gram-Schmidt, run twice; columns that collapse are replaced by the
/// first unit vectors that are not yet spanned.
fn orthonormalize(basis: &mut Array2<f64>) {
    let (p, n) = basis.dim();
    let mut next_unit = 0usize;
    for j in 0..n {
        let mut v = basis.column(j).to_owned();
        let mut norm0 = v.dot(&v).sqrt();
        loop {
            for _ in 0..2 {
                for i in 0..j {
                    let q = basis.column(i);
                    let r = q.dot(&v);
                    v.scaled_add(-r, &q);
                }
            }
            let norm = v.dot(&v).sqrt();
            if norm0 > 0.0 && norm > 1e-8 * norm0 {
                v /= norm;
                break;
            }
            v = Array1::zeros(p);
            v[next_unit.min(p - 1)] = 1.0;
            next_unit += 1;
            norm0 = 1.0;
        }
        basis.column_mut(j).assign(&v);
    }
}

/// Project one image onto the subspace.
pub fn project(model: &SubspaceModel, image: &Array2<f64>) -> Result<SubspaceFeatures> {
    let x = vectorize(image);
    project_vector(model, x.view())
}

pub fn project_vector(model: &SubspaceModel, x: ArrayView1<f64>) -> Result<SubspaceFeatures> {
    if x.len() != model.p {
        return Err(Error::DimensionMismatch { expected: model.p, got: x.len() });
    }
    let projections = match &model.mean {
        Some(m) => model.basis.t().dot(&(&x - m)),
        None => model.basis.t().dot(&x),
    };
    Ok(SubspaceFeatures { projections: projections.to_vec() })
}

/// Project many samples at once (rows in, rows out: n x p -> n x λ).
pub fn project_rows(model: &SubspaceModel, data: ArrayView2<f64>) -> Result<Array2<f64>> {
    if data.ncols() != model.p {
        return Err(Error::DimensionMismatch { expected: model.p, got: data.ncols() });
    }
    Ok(match &model.mean {
        Some(m) => (&data - m).dot(&model.basis),
        None => data.dot(&model.basis),
    })
}

/// Fraction of the total variance carried by each kept component.
pub fn explained_variance(model: &SubspaceModel) -> Vec<f64> {
    if model.total_variance <= 0.0 {
        return vec![0.0; model.eigenvalues.len()];
    }
    model.eigenvalues.iter().map(|e| e / model.total_variance).collect()
}

fn put_u64(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u64).to_le_bytes());
}

fn put_f64s<'a>(buf: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Binary layout, little-endian: magic, version u16, kind u8, p u64, d u64, λ u64,
/// centered u8, total variance f64, mean (p values if centered), basis
/// column-major, eigenvalues, then the SHA-256 of everything before it.
pub fn encode(model: &SubspaceModel) -> Vec<u8> {
    let lambda = model.lambda();
    let mut buf = Vec::with_capacity(64 + 8 * (model.p * (lambda + 1) + lambda));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(model.representation.code());
    put_u64(&mut buf, model.p);
    put_u64(&mut buf, model.d);
    put_u64(&mut buf, lambda);
    buf.push(model.is_centered() as u8);
    put_f64s(&mut buf, [model.total_variance].iter());
    if let Some(m) = &model.mean {
        put_f64s(&mut buf, m.iter());
    }
    put_f64s(&mut buf, model.basis.t().iter());
    put_f64s(&mut buf, model.eigenvalues.iter());
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("model file truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format("size does not fit in memory".into()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<SubspaceModel> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a subspace model (bad magic)".into()));
    }
    if bytes.len() < 4 + 2 + 32 {
        return Err(Error::Format("model file truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Format("model checksum mismatch".into()));
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let code = cur.u8()?;
    let representation =
        RepresentationKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown representation code {code}")))?;
    let p = cur.u64()?;
    let d = cur.u64()?;
    let lambda = cur.u64()?;
    let centered = match cur.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::Format(format!("bad centering flag {other}"))),
    };
    let (r, c) = representation.dims();
    if p != r * c || lambda == 0 || lambda > p.min(d) {
        return Err(Error::Format(format!("inconsistent sizes p={p} d={d} lambda={lambda}")));
    }
    let total_variance = cur.f64s(1)?[0];
    let mean = if centered { Some(Array1::from(cur.f64s(p)?)) } else { None };
    let cols = cur.f64s(p * lambda)?;
    let basis = Array2::from_shape_vec((lambda, p), cols).expect("sized above").reversed_axes();
    let basis = basis.as_standard_layout().to_owned();
    let eigenvalues = cur.f64s(lambda)?;
    if cur.pos != body.len() {
        return Err(Error::Format("trailing bytes in model file".into()));
    }
    Ok(SubspaceModel { representation, p, d, mean, basis, eigenvalues, total_variance })
}

pub fn save(model: &SubspaceModel, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(model))?;
    f.sync_all()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SubspaceModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const K: RepresentationKind = RepresentationKind::Mcs;

    fn random_rows(d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((d, 129), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identical_images_have_zero_variance() {
        let img = Array2::from_shape_fn((1, 129), |(_, j)| (j as f64).sin());
        let m = fit(&vec![img.clone(); 6], K, 3, true).unwrap();
        assert!(m.eigenvalues.iter().all(|&e| e.abs() < 1e-25));
        let gram = m.basis.t().dot(&m.basis);
        assert!((gram - Array2::<f64>::eye(3)).iter().all(|v| v.abs() < 1e-12));
        assert!(project(&m, &img).unwrap().projections.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn orthogonal_columns_give_squared_norms() {
        // Two samples along orthogonal axes with norms 3 and 1, no centering.
        let mut y = Array2::zeros((2, 129));
        y[[0, 4]] = 3.0;
        y[[1, 9]] = 1.0;
        let m = fit_rows(y.view(), K, 2, false).unwrap();
        assert!((m.eigenvalues[0] - 9.0).abs() < 1e-12);
        assert!((m.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert!((m.basis[[4, 0]] - 1.0).abs() < 1e-12);
        assert!((m.basis[[9, 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenpairs_match_brute_force_covariance() {
        let y = random_rows(5, 1);
        let m = fit_rows(y.view(), K, 4, true).unwrap();
        let mean = y.mean_axis(Axis(0)).unwrap();
        let yc = &y - &mean;
        let cov = yc.t().dot(&yc) / 4.0;
        let mut recon = Array2::<f64>::zeros((129, 129));
        for (k, e) in m.eigenvalues.iter().enumerate() {
            let u = m.basis.column(k);
            for i in 0..129 {
                for j in 0..129 {
                    recon[[i, j]] += e * u[i] * u[j];
                }
            }
        }
        assert!((&recon - &cov).iter().all(|v| v.abs() < 1e-9));
        let total = cov.diag().sum();
        assert!((m.total_variance - total).abs() < 1e-12 * total);
    }

    #[test]
    fn basis_columns_project_to_unit_vectors() {
        let y = random_rows(8, 2);
        let m = fit_rows(y.view(), K, 5, true).unwrap();
        for k in 0..5 {
            let x = &m.basis.column(k) + m.mean.as_ref().unwrap();
            let p = project_vector(&m, x.view()).unwrap().projections;
            for (j, v) in p.iter().enumerate() {
                assert!((v - if j == k { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sign_convention_makes_largest_entry_positive() {
        let m = fit_rows(random_rows(10, 3).view(), K, 6, true).unwrap();
        for col in m.basis.columns() {
            let big = col.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn explained_variance_is_monotone_and_bounded() {
        let m = fit_rows(random_rows(12, 4).view(), K, 7, true).unwrap();
        let ev = explained_variance(&m);
        assert!(ev.windows(2).all(|w| w[0] >= w[1]));
        let s: f64 = ev.iter().sum();
        assert!(s <= 1.0 + 1e-12 && s > 0.0);

        // One direction of variation only.
        let y = Array2::from_shape_fn((4, 129), |(i, j)| if j == 3 { i as f64 } else { 0.0 });
        let m = fit_rows(y.view(), K, 1, true).unwrap();
        assert!((explained_variance(&m)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y = random_rows(3, 5);
        assert!(matches!(fit_rows(y.view(), K, 4, true), Err(Error::OutOfRange(_))));
        assert!(matches!(fit_rows(y.view(), K, 0, true), Err(Error::OutOfRange(_))));
        assert!(matches!(fit_rows(y.slice(ndarray::s![..1, ..]), K, 1, true), Err(Error::TooShort { .. })));
        assert!(matches!(
            fit_rows(y.view(), RepresentationKind::Cvd, 1, true),
            Err(Error::DimensionMismatch { .. })
        ));
        let m = fit_rows(y.view(), K, 2, true).unwrap();
        assert!(matches!(project(&m, &Array2::zeros((1, 10))), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn encode_decode_round_trip() {
        for center in [true, false] {
            let m = fit_rows(random_rows(9, 6).view(), K, 4, center).unwrap();
            let back = decode(&encode(&m)).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.basis.as_slice().unwrap(), m.basis.as_slice().unwrap());
        }
    }

    #[test]
    fn decode_detects_corruption() {
        let m = fit_rows(random_rows(4, 7).view(), K, 2, true).unwrap();
        let mut bytes = encode(&m);
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(decode(&bad_magic), Err(Error::Format(_))));
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        let err = decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"));
        assert!(matches!(decode(&encode(&m)[..20]), Err(Error::Format(_))));
    }
}

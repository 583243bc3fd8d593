//! Eigengesture classifier: snapshot PCA over binary templates and
//! nearest-template matching in the component space with a rejection radius.
//!
//! Templates enter as real 0/1 vectors. Components come from the
//! eigen-decomposition of the `n x n` Gram matrix of centered templates,
//! which is far smaller than the `d x d` pixel covariance when `n << d`.
//! Every reduction runs in a fixed index order, so a given template set
//! always produces the same model.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BinFrame;
use crate::scalar::Scalar;

pub const TEMPLATE_WIDTH: usize = 60;
pub const TEMPLATE_HEIGHT: usize = 80;

/// Largest usable label; 255 is reserved for "unknown" on the wire.
pub const MAX_LABEL: u8 = 254;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("no templates given")]
    EmptyTemplateSet,
    #[error("image is {got_w}x{got_h}, model expects {want_w}x{want_h}")]
    GeometryMismatch { want_w: usize, want_h: usize, got_w: usize, got_h: usize },
    #[error("label {0} out of range (0..=254)")]
    InvalidLabel(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
}

impl Geometry {
    pub const TEMPLATE: Geometry = Geometry { width: TEMPLATE_WIDTH, height: TEMPLATE_HEIGHT };

    pub fn of(bin: &BinFrame) -> Self {
        Geometry { width: bin.width(), height: bin.height() }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    fn check(&self, bin: &BinFrame) -> Result<(), EigenError> {
        if bin.width() != self.width || bin.height() != self.height {
            return Err(EigenError::GeometryMismatch {
                want_w: self.width,
                want_h: self.height,
                got_w: bin.width(),
                got_h: bin.height(),
            });
        }
        Ok(())
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Self::TEMPLATE
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GestureTemplate {
    pub label: u8,
    pub image: BinFrame,
    pub name: String,
}

impl GestureTemplate {
    pub fn new(label: u8, image: BinFrame, name: impl Into<String>) -> Result<Self, EigenError> {
        if label > MAX_LABEL {
            return Err(EigenError::InvalidLabel(label));
        }
        Ok(Self { label, image, name: name.into() })
    }
}

/// Result of matching one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification<T> {
    /// `None` when the nearest template lies beyond the rejection radius.
    pub label: Option<u8>,
    pub distance: T,
    pub frame_seq: u64,
}

impl<T: Scalar> Classification<T> {
    pub fn unknown(distance: T, frame_seq: u64) -> Self {
        Self { label: None, distance, frame_seq }
    }
}

/// Trained eigenspace model.
#[derive(Debug, Clone)]
pub struct EigenModel<T> {
    geometry: Geometry,
    mean: Vec<T>,
    components: Vec<Vec<T>>,
    eigenvalues: Vec<T>,
    coords: Vec<Vec<T>>,
    templates: Vec<GestureTemplate>,
    tau: T,
}

fn vectorize<T: Scalar>(bin: &BinFrame) -> Vec<T> {
    bin.bits().iter().map(|&b| if b { T::one() } else { T::zero() }).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn euclid<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y)).sqrt()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric row-major `n x n` matrix.
/// Returns eigenvalues and eigenvectors (as rows), sorted by decreasing
/// eigenvalue; equal eigenvalues keep their diagonal order.
pub fn symmetric_eigen<T: Scalar>(matrix: &[T], n: usize) -> (Vec<T>, Vec<Vec<T>>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    let total: T = a.iter().fold(T::zero(), |acc, &x| acc + x * x);
    let tol = T::epsilon() * T::epsilon() * total;
    for _sweep in 0..100 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off + a[p * n + q] * a[p * n + q];
            }
        }
        if off <= tol || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let two = T::one() + T::one();
                let theta = (a[q * n + q] - a[p * n + p]) / (two * apq);
                let sign = if theta < T::zero() { -T::one() } else { T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order
        .sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order.iter().map(|&j| (0..n).map(|k| v[k * n + j]).collect()).collect();
    (values, vectors)
}

/// Flips `u` so its largest-magnitude entry (first on ties) is positive.
fn canonical_sign<T: Scalar>(u: &mut [T]) {
    let mut best = 0;
    for (i, x) in u.iter().enumerate() {
        if x.abs() > u[best].abs() {
            best = i;
        }
    }
    if u.get(best).is_some_and(|&x| x < T::zero()) {
        for x in u.iter_mut() {
            *x = -*x;
        }
    }
}

impl<T: Scalar> EigenModel<T> {
    /// Trains with the default rejection radius (half the smallest
    /// eigenspace distance between templates of different labels).
    pub fn train(templates: &[GestureTemplate], k_max: usize) -> Result<Self, EigenError> {
        Self::train_with_tau(templates, k_max, None)
    }

    pub fn train_with_tau(
        templates: &[GestureTemplate],
        k_max: usize,
        tau_override: Option<T>,
    ) -> Result<Self, EigenError> {
        let first = templates.first().ok_or(EigenError::EmptyTemplateSet)?;
        let geometry = Geometry::of(&first.image);
        for t in templates {
            geometry.check(&t.image)?;
            if t.label > MAX_LABEL {
                return Err(EigenError::InvalidLabel(t.label));
            }
        }
        let n = templates.len();
        let d = geometry.pixels();
        let inv_n = T::one() / T::of(n as f64);

        let raw: Vec<Vec<T>> = templates.iter().map(|t| vectorize(&t.image)).collect();
        let mut mean = vec![T::zero(); d];
        for x in &raw {
            for (m, &v) in mean.iter_mut().zip(x) {
                *m = *m + v;
            }
        }
        for m in &mut mean {
            *m = *m * inv_n;
        }
        let centered: Vec<Vec<T>> = raw.iter().map(|x| x.iter().zip(&mean).map(|(&v, &m)| v - m).collect()).collect();

        let mut gram = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i..n {
                let g = dot(&centered[i], &centered[j]);
                gram[i * n + j] = g;
                gram[j * n + i] = g;
            }
        }
        let (values, vectors) = symmetric_eigen(&gram, n);
        let top = values.first().copied().unwrap_or_else(T::zero);
        // 1e-10 is below f32 resolution; there the cut sits at working precision.
        let rel = T::of(1e-10).max(T::epsilon() * T::of(100.0));
        let cap = k_max.min(n.saturating_sub(1)).min(d);
        let mut components: Vec<Vec<T>> = Vec::new();
        let mut eigenvalues = Vec::new();
        if top > T::zero() {
            for (lambda, v) in values.iter().zip(&vectors) {
                if components.len() == cap || *lambda / top < rel {
                    break;
                }
                let scale = T::one() / lambda.sqrt();
                let mut u = vec![T::zero(); d];
                for (coef, x) in v.iter().zip(&centered) {
                    for (ui, &xi) in u.iter_mut().zip(x) {
                        *ui = *ui + *coef * xi;
                    }
                }
                for ui in &mut u {
                    *ui = *ui * scale;
                }
                // Two passes of modified Gram-Schmidt keep the basis
                // orthonormal at working precision even for small eigenvalues.
                for _ in 0..2 {
                    for prev in &components {
                        let proj = dot(&u, prev);
                        for (ui, &pi) in u.iter_mut().zip(prev) {
                            *ui = *ui - proj * pi;
                        }
                    }
                    let norm = dot(&u, &u).sqrt();
                    for ui in &mut u {
                        *ui = *ui / norm;
                    }
                }
                canonical_sign(&mut u);
                components.push(u);
                let denom = T::of(n.saturating_sub(1).max(1) as f64);
                eigenvalues.push(lambda.max(T::zero()) / denom);
            }
        }

        let mut model = EigenModel {
            geometry,
            mean,
            components,
            eigenvalues,
            coords: Vec::new(),
            templates: templates.to_vec(),
            tau: T::infinity(),
        };
        model.coords = centered.iter().map(|x| model.project_centered(x)).collect();
        model.tau = match tau_override {
            Some(t) => t,
            None => model.default_tau(),
        };
        Ok(model)
    }

    fn default_tau(&self) -> T {
        let mut best = T::infinity();
        for i in 0..self.coords.len() {
            for j in i + 1..self.coords.len() {
                if self.templates[i].label != self.templates[j].label {
                    best = best.min(euclid(&self.coords[i], &self.coords[j]));
                }
            }
        }
        if best.is_infinite() {
            best
        } else {
            best * T::of(0.5)
        }
    }

    fn project_centered(&self, x: &[T]) -> Vec<T> {
        self.components.iter().map(|u| dot(u, x)).collect()
    }

    /// Eigenspace coordinates of `image`.
    pub fn project(&self, image: &BinFrame) -> Result<Vec<T>, EigenError> {
        self.geometry.check(image)?;
        let centered: Vec<T> =
            image.bits().iter().zip(&self.mean).map(|(&b, &m)| if b { T::one() - m } else { -m }).collect();
        Ok(self.project_centered(&centered))
    }

    /// Index of the nearest template and its eigenspace distance; the lowest
    /// index wins ties.
    pub fn nearest(&self, image: &BinFrame) -> Result<(usize, T), EigenError> {
        let p = self.project(image)?;
        let mut best = (0, T::infinity());
        for (i, c) in self.coords.iter().enumerate() {
            let dist = euclid(&p, c);
            if dist < best.1 {
                best = (i, dist);
            }
        }
        Ok(best)
    }

    pub fn classify(&self, image: &BinFrame, frame_seq: u64) -> Result<Classification<T>, EigenError> {
        let (idx, distance) = self.nearest(image)?;
        let label = if distance > self.tau { None } else { Some(self.templates[idx].label) };
        Ok(Classification { label, distance, frame_seq })
    }

    /// Reconstruction of `image` from its eigenspace coordinates.
    pub fn reconstruct(&self, image: &BinFrame) -> Result<Vec<T>, EigenError> {
        let p = self.project(image)?;
        let mut out = self.mean.clone();
        for (coef, u) in p.iter().zip(&self.components) {
            for (o, &ui) in out.iter_mut().zip(u) {
                *o = *o + *coef * ui;
            }
        }
        Ok(out)
    }

    pub fn with_tau(mut self, tau: T) -> Self {
        self.tau = tau;
        self
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<T>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn coords(&self) -> &[Vec<T>] {
        &self.coords
    }

    pub fn templates(&self) -> &[GestureTemplate] {
        &self.templates
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// Display name of a label, if any template carries it.
    pub fn name_of(&self, label: u8) -> Option<&str> {
        self.templates.iter().find(|t| t.label == label).map(|t| t.name.as_str())
    }

    /// Largest `|<u_i, u_j> - delta_ij|` over the component basis.
    pub fn orthonormality_residual(&self) -> T {
        let mut worst = T::zero();
        for (i, a) in self.components.iter().enumerate() {
            for (j, b) in self.components.iter().enumerate() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    }
}

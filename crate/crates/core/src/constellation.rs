//! Finite signal sets for the transmitter and the surface.
//!
//! Labels are Gray codes stored as integers; bit `b` of a label (counted
//! from the most significant of `bits_per_symbol`) is the `b`-th coded bit
//! carried by the symbol.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstellationKind {
    Psk,
    Qam,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    labels: Vec<u32>,
    point_of_label: Vec<usize>,
    bits_per_symbol: usize,
    kind: ConstellationKind,
}

pub(crate) fn gray(i: u32) -> u32 {
    i ^ (i >> 1)
}

impl Constellation {
    /// Builds a constellation from points and labels. The point count must be
    /// a power of two and the labels a bijection onto `0..len`.
    pub fn new(points: Vec<Complex64>, labels: Vec<u32>, kind: ConstellationKind) -> Result<Self> {
        let n = points.len();
        if n == 0 || !n.is_power_of_two() {
            return invalid(format!("constellation size must be a power of two, got {n}"));
        }
        if labels.len() != n {
            return invalid("one label per point required");
        }
        let mut point_of_label = vec![usize::MAX; n];
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= n || point_of_label[l as usize] != usize::MAX {
                return invalid(format!("labels are not a bijection onto 0..{n}"));
            }
            point_of_label[l as usize] = i;
        }
        Ok(Self {
            points,
            labels,
            point_of_label,
            bits_per_symbol: n.trailing_zeros() as usize,
            kind,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    /// Mean of `|x|^2` over the points.
    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Value (0 or 1) of bit `b` of point `i`'s label, MSB first.
    pub fn label_bit(&self, i: usize, b: usize) -> u8 {
        ((self.labels[i] >> (self.bits_per_symbol - 1 - b)) & 1) as u8
    }

    /// Index of the point whose label is formed by `bits` (MSB first).
    pub fn index_of_bits(&self, bits: &[u8]) -> usize {
        debug_assert_eq!(bits.len(), self.bits_per_symbol);
        let label = bits.iter().fold(0u32, |acc, &b| (acc << 1) | (b as u32 & 1));
        self.point_of_label[label as usize]
    }

    pub fn index_of_label(&self, label: u32) -> usize {
        self.point_of_label[label as usize]
    }

    /// Index of the nearest point (minimum Euclidean distance).
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    /// Returns a copy with every point multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        let mut c = self.clone();
        for p in c.points.iter_mut() {
            *p *= scale;
        }
        c
    }
}

/// Unit-modulus PSK with Gray labels; point `i` sits at angle `2*pi*i/order`.
pub fn make_psk(order: usize) -> Result<Constellation> {
    if order < 2 || !order.is_power_of_two() {
        return invalid(format!("PSK order must be a power of two >= 2, got {order}"));
    }
    let points = (0..order)
        .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / order as f64))
        .collect();
    let labels = (0..order as u32).map(gray).collect();
    Constellation::new(points, labels, ConstellationKind::Psk)
}

/// Square QAM with per-axis Gray labels, scaled to unit average power.
pub fn make_qam(order: usize) -> Result<Constellation> {
    if !matches!(order, 4 | 16 | 64 | 256 | 1024) {
        return invalid(format!("unsupported QAM order {order} (square orders 4..1024 only)"));
    }
    let side = (order as f64).sqrt().round() as usize;
    let axis_bits = side.trailing_zeros();
    let scale = (2.0 * (order as f64 - 1.0) / 3.0).sqrt().recip();
    let level = |i: usize| (2 * i) as f64 - (side - 1) as f64;
    let mut points = Vec::with_capacity(order);
    let mut labels = Vec::with_capacity(order);
    for i in 0..side {
        for q in 0..side {
            points.push(Complex64::new(level(i), level(q)) * scale);
            labels.push((gray(i as u32) << axis_bits) | gray(q as u32));
        }
    }
    Constellation::new(points, labels, ConstellationKind::Qam)
}

/// Phase alphabet of the surface: every point is `exp(j*theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhaseSet {
    angles: Vec<f64>,
    constellation: Constellation,
}

impl RisPhaseSet {
    /// Gray-labels the angles in the given order.
    pub fn from_angles(angles: Vec<f64>) -> Result<Self> {
        if angles.iter().any(|a| !a.is_finite()) {
            return invalid("phase angles must be finite");
        }
        let points = angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
        let labels = (0..angles.len() as u32).map(gray).collect();
        let constellation = Constellation::new(points, labels, ConstellationKind::Psk)?;
        Ok(Self { angles, constellation })
    }

    /// `order` equally spaced phases starting at zero.
    pub fn uniform(order: usize) -> Result<Self> {
        Self::from_angles((0..order).map(|i| 2.0 * PI * i as f64 / order as f64).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn points(&self) -> &[Complex64] {
        self.constellation.points()
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn as_constellation(&self) -> &Constellation {
        &self.constellation
    }
}

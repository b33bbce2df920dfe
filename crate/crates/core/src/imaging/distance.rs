//! Exact Euclidean distance transform (separable lower-envelope method).

use super::BinaryMap;

/// Distance from every pixel to the nearest set pixel of a [`BinaryMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceMap {
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Value stored for every pixel when the map has no set pixel: the image diagonal.
    pub fn max_dist(&self) -> f64 {
        max_dist(self.width, self.height)
    }
}

fn max_dist(width: usize, height: usize) -> f64 {
    (width as f64).hypot(height as f64)
}

// Stand-in for +inf that keeps the parabola intersections finite.
const FAR: f64 = 1e20;

pub fn distance_transform(m: &BinaryMap) -> DistanceMap {
    let (w, h) = (m.width(), m.height());
    if m.count() == 0 {
        return DistanceMap {
            width: w,
            height: h,
            values: vec![max_dist(w, h); w * h],
        };
    }

    let mut sq: Vec<f64> = m.bits().iter().map(|&b| if b { 0.0 } else { FAR }).collect();
    let n = w.max(h);
    let mut scratch = Envelope::with_capacity(n);
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];

    for x in 0..w {
        for y in 0..h {
            line[y] = sq[y * w + x];
        }
        scratch.transform(&line[..h], &mut out[..h]);
        for y in 0..h {
            sq[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut sq[y * w..(y + 1) * w];
        line[..w].copy_from_slice(row);
        scratch.transform(&line[..w], row);
    }

    DistanceMap {
        width: w,
        height: h,
        values: sq.into_iter().map(f64::sqrt).collect(),
    }
}

/// Working storage for the 1-D squared distance transform
/// `out[q] = min_p (q − p)² + f[p]`.
struct Envelope {
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            vertices: vec![0; n],
            bounds: vec![0.0; n + 1],
        }
    }

    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let (v, z) = (&mut self.vertices, &mut self.bounds);
        let intersect = |p: usize, q: usize| -> f64 {
            let (pf, qf) = (p as f64, q as f64);
            ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
        };
        let mut k = 0;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for q in 1..n {
            let mut s = intersect(v[k], q);
            while s <= z[k] {
                k -= 1;
                s = intersect(v[k], q);
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        k = 0;
        for (q, o) in out.iter_mut().enumerate().take(n) {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let d = q as f64 - v[k] as f64;
            *o = d * d + f[v[k]];
        }
    }
}

//! Per-plane raster supports: binary occupancy and soft multi-label bitmaps.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::geom::Vec2;

/// Binary occupancy raster in a plane's 2D frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyBitmap {
    pub origin: [f64; 2],
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    #[serde(serialize_with = "bits_to_string", deserialize_with = "bits_from_string")]
    pub bits: Vec<bool>,
}

fn bits_to_string<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.serialize_str(&text)
}

fn bits_from_string<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
    let text = String::deserialize(d)?;
    text.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(serde::de::Error::custom(format!("bad bit {other:?}"))),
        })
        .collect()
}

/// Grid extents covering `points` with the origin at their minimum corner.
fn grid_extent(points: &[Vec2], pixel: f64) -> ([f64; 2], usize, usize) {
    if points.is_empty() {
        return ([0.0, 0.0], 0, 0);
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    let w = ((hi.x - lo.x) / pixel).floor() as usize + 1;
    let h = ((hi.y - lo.y) / pixel).floor() as usize + 1;
    ([lo.x, lo.y], w, h)
}

fn locate(origin: [f64; 2], pixel: f64, w: usize, h: usize, q: &Vec2) -> Option<usize> {
    let fx = ((q.x - origin[0]) / pixel).floor();
    let fy = ((q.y - origin[1]) / pixel).floor();
    if fx < 0.0 || fy < 0.0 || fx >= w as f64 || fy >= h as f64 {
        return None;
    }
    Some(fy as usize * w + fx as usize)
}

/// Chebyshev max filter with `radius` pixels of padding on every side.
fn dilate_channels(
    data: &[f64],
    w: usize,
    h: usize,
    ch: usize,
    radius: usize,
) -> (Vec<f64>, usize, usize) {
    let nw = w + 2 * radius;
    let nh = h + 2 * radius;
    let mut padded = vec![0.0; nw * nh * ch];
    for y in 0..h {
        for x in 0..w {
            let src = (y * w + x) * ch;
            let dst = ((y + radius) * nw + x + radius) * ch;
            padded[dst..dst + ch].copy_from_slice(&data[src..src + ch]);
        }
    }
    if radius == 0 {
        return (padded, nw, nh);
    }
    let mut rows = vec![0.0; nw * nh * ch];
    for y in 0..nh {
        for x in 0..nw {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(nw - 1);
            for c in 0..ch {
                let mut m = 0.0f64;
                for xx in lo..=hi {
                    m = m.max(padded[(y * nw + xx) * ch + c]);
                }
                rows[(y * nw + x) * ch + c] = m;
            }
        }
    }
    let mut out = vec![0.0; nw * nh * ch];
    for y in 0..nh {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(nh - 1);
        for x in 0..nw {
            for c in 0..ch {
                let mut m = 0.0f64;
                for yy in lo..=hi {
                    m = m.max(rows[(yy * nw + x) * ch + c]);
                }
                out[(y * nw + x) * ch + c] = m;
            }
        }
    }
    (out, nw, nh)
}

impl OccupancyBitmap {
    pub fn empty(pixel_size: f64) -> Self {
        OccupancyBitmap {
            origin: [0.0, 0.0],
            pixel_size,
            width: 0,
            height: 0,
            bits: Vec::new(),
        }
    }

    /// Rasterize projected points over their bounding box.
    pub fn from_points(points: &[Vec2], pixel_size: f64) -> Self {
        let (origin, width, height) = grid_extent(points, pixel_size);
        let mut bm = OccupancyBitmap {
            origin,
            pixel_size,
            width,
            height,
            bits: vec![false; width * height],
        };
        for p in points {
            if let Some(i) = bm.index_of(p) {
                bm.bits[i] = true;
            }
        }
        bm
    }

    pub fn index_of(&self, q: &Vec2) -> Option<usize> {
        locate(self.origin, self.pixel_size, self.width, self.height, q)
    }

    pub fn is_set(&self, q: &Vec2) -> bool {
        self.index_of(q).is_some_and(|i| self.bits[i])
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn support_area(&self) -> f64 {
        self.count() as f64 * self.pixel_size * self.pixel_size
    }

    /// Lower-left corner of pixel `(x, y)`.
    pub fn pixel_corner(&self, x: usize, y: usize) -> Vec2 {
        Vec2::new(
            self.origin[0] + x as f64 * self.pixel_size,
            self.origin[1] + y as f64 * self.pixel_size,
        )
    }

    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |y| {
            (0..self.width).filter_map(move |x| self.get(x, y).then_some((x, y)))
        })
    }

    /// Bounding box of the set pixels, in plane coordinates.
    pub fn set_bounds(&self) -> Option<(Vec2, Vec2)> {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for (x, y) in self.set_pixels() {
            any = true;
            let c = self.pixel_corner(x, y);
            lo.x = lo.x.min(c.x);
            lo.y = lo.y.min(c.y);
            hi.x = hi.x.max(c.x + self.pixel_size);
            hi.y = hi.y.max(c.y + self.pixel_size);
        }
        any.then_some((lo, hi))
    }

    pub fn dilate(&self, radius: usize) -> Self {
        let data: Vec<f64> = self.bits.iter().map(|&b| b as u8 as f64).collect();
        let (out, w, h) = dilate_channels(&data, self.width, self.height, 1, radius);
        let r = radius as f64 * self.pixel_size;
        OccupancyBitmap {
            origin: [self.origin[0] - r, self.origin[1] - r],
            pixel_size: self.pixel_size,
            width: w,
            height: h,
            bits: out.into_iter().map(|v| v > 0.0).collect(),
        }
    }
}

/// Soft per-pixel room-label support in `[0,1]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelBitmap {
    pub origin: [f64; 2],
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
    pub n_labels: usize,
    pub data: Vec<f64>,
}

impl MultiLabelBitmap {
    /// Average the labels of the projected points falling in each pixel.
    /// Unlabeled points still extend the grid but contribute nothing.
    pub fn from_labeled_points(
        points: &[Vec2],
        labels: &[Option<u32>],
        n_labels: usize,
        pixel_size: f64,
    ) -> Self {
        let (origin, width, height) = grid_extent(points, pixel_size);
        let mut counts = vec![0u32; width * height];
        let mut data = vec![0.0; width * height * n_labels];
        for (p, l) in points.iter().zip(labels) {
            let (Some(i), Some(l)) = (locate(origin, pixel_size, width, height, p), l) else {
                continue;
            };
            if (*l as usize) < n_labels {
                counts[i] += 1;
                data[i * n_labels + *l as usize] += 1.0;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                for v in &mut data[i * n_labels..(i + 1) * n_labels] {
                    *v /= c as f64;
                }
            }
        }
        MultiLabelBitmap {
            origin,
            pixel_size,
            width,
            height,
            n_labels,
            data,
        }
    }

    pub fn index_of(&self, q: &Vec2) -> Option<usize> {
        locate(self.origin, self.pixel_size, self.width, self.height, q)
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = y * self.width + x;
        &self.data[i * self.n_labels..(i + 1) * self.n_labels]
    }

    pub fn at(&self, q: &Vec2) -> Option<&[f64]> {
        self.index_of(q)
            .map(|i| &self.data[i * self.n_labels..(i + 1) * self.n_labels])
    }

    pub fn is_nonzero(&self, x: usize, y: usize) -> bool {
        self.pixel(x, y).iter().any(|&v| v > 0.0)
    }

    pub fn dilate(&self, radius: usize) -> Self {
        let (data, w, h) =
            dilate_channels(&self.data, self.width, self.height, self.n_labels, radius);
        let r = radius as f64 * self.pixel_size;
        MultiLabelBitmap {
            origin: [self.origin[0] - r, self.origin[1] - r],
            pixel_size: self.pixel_size,
            width: w,
            height: h,
            n_labels: self.n_labels,
            data,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn corners_give_four_bits() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
        ];
        let bm = OccupancyBitmap::from_points(&pts, 0.2);
        assert_eq!(bm.count(), 4);
    }

    #[test]
    fn single_point_grid() {
        let bm = OccupancyBitmap::from_points(&[Vec2::new(3.0, -2.0)], 0.2);
        assert_eq!((bm.width, bm.height), (1, 1));
        assert_eq!(bm.count(), 1);
        assert!((bm.support_area() - 0.04).abs() < 1e-12);
    }

    #[test]
    fn dense_patch_area() {
        use rand::Rng;
        let mut rng = crate::geom::rng_for(1, 0, 0);
        let pts: Vec<Vec2> = (0..20_000)
            .map(|_| Vec2::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let bm = OccupancyBitmap::from_points(&pts, 0.2);
        // Oracle: grid cells meeting the patch [min, 1) per axis, origin at the inlier minimum.
        let cells = |o: f64| ((1.0 - o) / 0.2).ceil();
        let oracle = cells(bm.origin[0]) * cells(bm.origin[1]) * 0.04;
        assert!((bm.support_area() - oracle).abs() < 1e-9);
        assert!((bm.support_area() - 1.0).abs() <= 0.08);
    }

    #[test]
    fn multilabel_averages() {
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(0.01 * i as f64, 0.0)).collect();
        let mut labels = vec![Some(0); 5];
        labels.extend(vec![Some(1); 5]);
        let bm = MultiLabelBitmap::from_labeled_points(&pts, &labels, 3, 0.1);
        assert_eq!(bm.pixel(0, 0), &[0.5, 0.5, 0.0]);
        let bm = MultiLabelBitmap::from_labeled_points(&pts, &[Some(2); 10], 3, 0.1);
        assert_eq!(bm.pixel(0, 0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_pixel_is_zero() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(0.35, 0.0)];
        let bm = MultiLabelBitmap::from_labeled_points(&pts, &[Some(0), Some(0)], 2, 0.1);
        assert_eq!(bm.pixel(1, 0), &[0.0, 0.0]);
    }

    #[test]
    fn dilate_single_pixel() {
        let bm = MultiLabelBitmap::from_labeled_points(&[Vec2::new(0.0, 0.0)], &[Some(0)], 1, 0.1);
        assert_eq!(bm.dilate(0), bm);
        let d = bm.dilate(2);
        assert_eq!((d.width, d.height), (5, 5));
        let nz = (0..5)
            .flat_map(|y| (0..5).map(move |x| (x, y)))
            .filter(|&(x, y)| d.is_nonzero(x, y))
            .count();
        assert_eq!(nz, 25);
    }

    fn arb_bitmap() -> impl Strategy<Value = MultiLabelBitmap> {
        (1usize..7, 1usize..7, 1usize..3).prop_flat_map(|(w, h, n)| {
            proptest::collection::vec(0.0f64..1.0, w * h * n).prop_map(move |data| {
                let data = data.into_iter().map(|v| if v < 0.6 { 0.0 } else { v }).collect();
                MultiLabelBitmap {
                    origin: [0.0, 0.0],
                    pixel_size: 0.1,
                    width: w,
                    height: h,
                    n_labels: n,
                    data,
                }
            })
        })
    }

    /// Direct Chebyshev-ball evaluation on the padded grid.
    fn dilate_oracle(b: &MultiLabelBitmap, r: usize) -> Vec<f64> {
        let (w, h) = (b.width + 2 * r, b.height + 2 * r);
        let mut out = vec![0.0; w * h * b.n_labels];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                for c in 0..b.n_labels {
                    let mut m = 0.0f64;
                    for sy in 0..b.height as i64 {
                        for sx in 0..b.width as i64 {
                            let (px, py) = (sx + r as i64, sy + r as i64);
                            if (px - x).abs() <= r as i64 && (py - y).abs() <= r as i64 {
                                m = m.max(b.pixel(sx as usize, sy as usize)[c]);
                            }
                        }
                    }
                    out[(y as usize * w + x as usize) * b.n_labels + c] = m;
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn dilation_composes(b in arb_bitmap(), r1 in 0usize..3, r2 in 0usize..3) {
            let two = b.dilate(r1).dilate(r2);
            let one = b.dilate(r1 + r2);
            prop_assert_eq!(two.data, one.data.clone());
            prop_assert_eq!(one.data, dilate_oracle(&b, r1 + r2));
        }

        #[test]
        fn occupancy_density_independent(pts in proptest::collection::vec((0.0f64..3.0, 0.0f64..2.0), 1..60)) {
            let p: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
            let mut doubled = p.clone();
            doubled.extend(p.iter().cloned());
            prop_assert_eq!(OccupancyBitmap::from_points(&p, 0.2), OccupancyBitmap::from_points(&doubled, 0.2));
        }
    }
}

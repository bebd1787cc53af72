//! Spherical geometry: ERP and cubemap mappings, sphere resampling, and
//! pixel-space ladder resizing.
//!
//! Axis convention is x right, y up, z forward. Continuous pixel coordinates
//! put the center of pixel `i` at `i`, so an ERP image spans
//! `[-0.5, W - 0.5)` horizontally.
//!
//! Face-local coordinates `(u, v)` lie in `[-1, 1]` with `v` growing
//! downward:
//!
//! | face        | u         | v         |
//! |-------------|-----------|-----------|
//! | Front (+z)  | `x / z`   | `-y / z`  |
//! | Back (-z)   | `-x / |z|`| `-y / |z|`|
//! | Right (+x)  | `-z / x`  | `-y / x`  |
//! | Left (-x)   | `z / |x|` | `-y / |x|`|
//! | Top (+y)    | `x / y`   | `z / y`   |
//! | Bottom (-y) | `x / |y|` | `-z / |y|`|

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{check_geometry, FrameBuffer, Projection, VideoSequence};

/// Unit viewing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    x: f64,
    y: f64,
    z: f64,
}

impl Direction {
    /// Normalizes `(x, y, z)`; fails on the zero vector or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (x * x + y * y + z * z).sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::Direction(format!("({x}, {y}, {z}) cannot be normalized")));
        }
        Ok(Direction {
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn components(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Angle between two directions in radians, accurate for tiny angles.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let [a1, a2, a3] = self.components();
        let [b1, b2, b3] = other.components();
        let cross = [a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1];
        let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let cos = a1 * b1 + a2 * b2 + a3 * b3;
        sin.atan2(cos)
    }
}

/// Cubemap face. The declaration order is the stable face order and also
/// the tie-break priority used by [`direction_to_face`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaceId {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl FaceId {
    pub const ALL: [FaceId; 6] = [
        FaceId::Front,
        FaceId::Back,
        FaceId::Left,
        FaceId::Right,
        FaceId::Top,
        FaceId::Bottom,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FaceId::Front => "front",
            FaceId::Back => "back",
            FaceId::Left => "left",
            FaceId::Right => "right",
            FaceId::Top => "top",
            FaceId::Bottom => "bottom",
        }
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaceId::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::FaceCoord(format!("unknown face `{s}`")))
    }
}

/// Face-local coordinate with `|u|, |v| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceCoord {
    pub face: FaceId,
    pub u: f64,
    pub v: f64,
}

impl FaceCoord {
    pub fn new(face: FaceId, u: f64, v: f64) -> Result<Self> {
        if !(u.abs() <= 1.0 && v.abs() <= 1.0) {
            return Err(Error::FaceCoord(format!("({u}, {v}) outside [-1, 1]")));
        }
        Ok(FaceCoord { face, u, v })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleFilter {
    #[default]
    Bilinear,
    Lanczos3,
}

impl FromStr for ResampleFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(ResampleFilter::Bilinear),
            "lanczos3" => Ok(ResampleFilter::Lanczos3),
            _ => Err(Error::Config(format!("unknown filter `{s}`"))),
        }
    }
}

fn check_positive(w: usize, h: usize) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::Geometry(format!("{w}x{h} must be positive")));
    }
    Ok(())
}

/// Direction of the continuous ERP pixel position `(u, v)` in a `w x h` image.
///
/// Longitude wraps; latitude is clamped to the image rows.
pub fn erp_to_direction(u: f64, v: f64, w: usize, h: usize) -> Result<Direction> {
    check_positive(w, h)?;
    let (wf, hf) = (w as f64, h as f64);
    let v = v.clamp(-0.5, hf - 0.5);
    let lon = (u + 0.5) / wf * 2.0 * PI - PI;
    let lat = FRAC_PI_2 - (v + 0.5) / hf * PI;
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    Ok(Direction {
        x: clat * slon,
        y: slat,
        z: clat * clon,
    })
}

/// Inverse of [`erp_to_direction`]. At the poles `u` is fixed to `w/2 - 0.5`.
pub fn direction_to_erp(d: &Direction, w: usize, h: usize) -> Result<(f64, f64)> {
    check_positive(w, h)?;
    let (wf, hf) = (w as f64, h as f64);
    let horiz = d.x.hypot(d.z);
    if horiz == 0.0 && d.y == 0.0 {
        return Err(Error::Direction("zero vector".into()));
    }
    let lat = d.y.atan2(horiz);
    let v = (FRAC_PI_2 - lat) / PI * hf - 0.5;
    let u = if horiz == 0.0 {
        wf / 2.0 - 0.5
    } else {
        let lon = d.x.atan2(d.z);
        let u = (lon + PI) / (2.0 * PI) * wf - 0.5;
        if u >= wf - 0.5 {
            u - wf
        } else {
            u
        }
    };
    Ok((u, v))
}

/// Face containing `d` and the face-local coordinate of `d` on it.
pub fn direction_to_face(d: &Direction) -> Result<FaceCoord> {
    let (ax, ay, az) = (d.x.abs(), d.y.abs(), d.z.abs());
    let m = ax.max(ay).max(az);
    if !(m > 0.0) {
        return Err(Error::Direction("zero vector".into()));
    }
    // first match wins, in face priority order
    let face = if az == m && d.z > 0.0 {
        FaceId::Front
    } else if az == m {
        FaceId::Back
    } else if ax == m && d.x < 0.0 {
        FaceId::Left
    } else if ax == m {
        FaceId::Right
    } else if d.y > 0.0 {
        FaceId::Top
    } else {
        FaceId::Bottom
    };
    let (u, v) = match face {
        FaceId::Front => (d.x / az, -d.y / az),
        FaceId::Back => (-d.x / az, -d.y / az),
        FaceId::Right => (-d.z / ax, -d.y / ax),
        FaceId::Left => (d.z / ax, -d.y / ax),
        FaceId::Top => (d.x / ay, d.z / ay),
        FaceId::Bottom => (d.x / ay, -d.z / ay),
    };
    Ok(FaceCoord {
        face,
        u: u.clamp(-1.0, 1.0),
        v: v.clamp(-1.0, 1.0),
    })
}

/// Direction of a face-local coordinate.
pub fn face_to_direction(fc: &FaceCoord) -> Result<Direction> {
    let FaceCoord { face, u, v } = *fc;
    if !(u.abs() <= 1.0 && v.abs() <= 1.0) {
        return Err(Error::FaceCoord(format!("({u}, {v}) outside [-1, 1]")));
    }
    let (x, y, z) = match face {
        FaceId::Front => (u, -v, 1.0),
        FaceId::Back => (-u, -v, -1.0),
        FaceId::Right => (1.0, -v, -u),
        FaceId::Left => (-1.0, -v, u),
        FaceId::Top => (u, 1.0, v),
        FaceId::Bottom => (u, -1.0, -v),
    };
    Direction::new(x, y, z)
}

/// Continuous face coordinate of pixel center `i` on an `n`-pixel edge.
pub fn pixel_to_face_coord(i: usize, n: usize) -> f64 {
    2.0 * (i as f64 + 0.5) / n as f64 - 1.0
}

fn face_coord_to_pixel(c: f64, n: usize) -> f64 {
    (c + 1.0) * n as f64 / 2.0 - 0.5
}

#[derive(Clone, Copy)]
enum EdgeMode {
    /// Horizontal wrap, vertical clamp (ERP).
    WrapX,
    Clamp,
}

fn lanczos3(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-12 {
        1.0
    } else if x >= 3.0 {
        0.0
    } else {
        let px = PI * x;
        3.0 * px.sin() * (px / 3.0).sin() / (px * px)
    }
}

fn triangle(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Samples a plane at a continuous position. Kernel weights are normalized
/// so constants are reproduced exactly.
fn sample(
    plane: &[u8],
    w: usize,
    h: usize,
    x: f64,
    y: f64,
    filter: ResampleFilter,
    edge: EdgeMode,
) -> f64 {
    let (radius, kernel): (isize, fn(f64) -> f64) = match filter {
        ResampleFilter::Bilinear => (1, triangle),
        ResampleFilter::Lanczos3 => (3, lanczos3),
    };
    let x = match edge {
        EdgeMode::WrapX => x,
        EdgeMode::Clamp => x.clamp(0.0, (w - 1) as f64),
    };
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = x.floor() as isize;
    let y0 = y.floor() as isize;
    let col = |i: isize| -> usize {
        match edge {
            EdgeMode::WrapX => i.rem_euclid(w as isize) as usize,
            EdgeMode::Clamp => i.clamp(0, w as isize - 1) as usize,
        }
    };
    let row = |j: isize| j.clamp(0, h as isize - 1) as usize;

    let mut acc = 0.0;
    let mut wsum = 0.0;
    for j in (y0 - radius + 1)..=(y0 + radius) {
        let wy = kernel(y - j as f64);
        if wy == 0.0 {
            continue;
        }
        let base = row(j) * w;
        for i in (x0 - radius + 1)..=(x0 + radius) {
            let wx = kernel(x - i as f64);
            if wx == 0.0 {
                continue;
            }
            let wgt = wx * wy;
            acc += wgt * plane[base + col(i)] as f64;
            wsum += wgt;
        }
    }
    acc / wsum
}

fn to_sample(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// ERP source positions for every pixel of one face plane.
fn face_sampling_grid(face: FaceId, n: usize, src_w: usize, src_h: usize) -> Vec<(f64, f64)> {
    let mut grid = Vec::with_capacity(n * n);
    for j in 0..n {
        let v = pixel_to_face_coord(j, n);
        for i in 0..n {
            let u = pixel_to_face_coord(i, n);
            let d = face_to_direction(&FaceCoord { face, u, v }).expect("face grid is in range");
            grid.push(direction_to_erp(&d, src_w, src_h).expect("unit direction"));
        }
    }
    grid
}

/// Converts an ERP sequence to six cubemap face sequences in [`FaceId::ALL`] order.
pub fn erp_to_cmp(
    seq: &VideoSequence,
    face_size: usize,
    filter: ResampleFilter,
) -> Result<Vec<VideoSequence>> {
    if seq.projection() != Projection::Erp {
        return Err(Error::Projection("erp_to_cmp needs an ERP input".into()));
    }
    check_geometry(face_size, face_size)?;
    let (w, h) = (seq.width(), seq.height());
    FaceId::ALL
        .par_iter()
        .map(|&face| {
            let grids = [
                face_sampling_grid(face, face_size, w, h),
                face_sampling_grid(face, face_size / 2, w / 2, h / 2),
            ];
            let frames = seq
                .frames()
                .iter()
                .map(|frame| {
                    let planes: Vec<Vec<u8>> = (0..3)
                        .map(|p| {
                            let (pw, ph) = frame.plane_dims(p);
                            let grid = &grids[p.min(1)];
                            grid.iter()
                                .map(|&(x, y)| {
                                    to_sample(sample(frame.plane(p), pw, ph, x, y, filter, EdgeMode::WrapX))
                                })
                                .collect()
                        })
                        .collect();
                    let [y, cb, cr]: [Vec<u8>; 3] = planes.try_into().expect("three planes");
                    FrameBuffer::new(face_size, face_size, y, cb, cr)
                })
                .collect::<Result<Vec<_>>>()?;
            VideoSequence::new(
                face_size,
                face_size,
                seq.fps(),
                Projection::CmpFace,
                Some(face),
                frames,
            )
        })
        .collect()
}

/// Face index and face-pixel position for every pixel of one ERP plane.
fn erp_sampling_grid(w: usize, h: usize, n: usize) -> Vec<(usize, f64, f64)> {
    let mut grid = Vec::with_capacity(w * h);
    for j in 0..h {
        for i in 0..w {
            let d = erp_to_direction(i as f64, j as f64, w, h).expect("positive geometry");
            let fc = direction_to_face(&d).expect("unit direction");
            grid.push((
                fc.face.index(),
                face_coord_to_pixel(fc.u, n),
                face_coord_to_pixel(fc.v, n),
            ));
        }
    }
    grid
}

/// Reassembles an ERP sequence from six face sequences given in [`FaceId::ALL`] order.
pub fn cmp_to_erp(
    faces: &[VideoSequence],
    w: usize,
    h: usize,
    filter: ResampleFilter,
) -> Result<VideoSequence> {
    if faces.len() != 6 {
        return Err(Error::Projection(format!("expected 6 faces, got {}", faces.len())));
    }
    check_geometry(w, h)?;
    let n = faces[0].width();
    let count = faces[0].len();
    for (k, f) in faces.iter().enumerate() {
        if f.width() != n || f.height() != n || f.len() != count {
            return Err(Error::Geometry(format!(
                "face {k} is {}x{} with {} frames; expected {n}x{n} with {count}",
                f.width(),
                f.height(),
                f.len()
            )));
        }
        if f.face() != Some(FaceId::ALL[k]) {
            return Err(Error::Projection(format!(
                "face slot {k} holds {:?}, expected {}",
                f.face(),
                FaceId::ALL[k]
            )));
        }
    }
    let grids = [erp_sampling_grid(w, h, n), erp_sampling_grid(w / 2, h / 2, n / 2)];
    let frames = (0..count)
        .into_par_iter()
        .map(|t| {
            let planes: Vec<Vec<u8>> = (0..3)
                .map(|p| {
                    let grid = &grids[p.min(1)];
                    let pn = if p == 0 { n } else { n / 2 };
                    grid.iter()
                        .map(|&(k, x, y)| {
                            let src = faces[k].frames()[t].plane(p);
                            to_sample(sample(src, pn, pn, x, y, filter, EdgeMode::Clamp))
                        })
                        .collect()
                })
                .collect();
            let [y, cb, cr]: [Vec<u8>; 3] = planes.try_into().expect("three planes");
            FrameBuffer::new(w, h, y, cb, cr)
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::new(w, h, faces[0].fps(), Projection::Erp, None, frames)
}

/// Per-output-sample tap list for one axis of a separable resize.
#[derive(Debug, Clone)]
pub(crate) struct AxisTaps {
    start: Vec<usize>,
    weights: Vec<Vec<f64>>,
}

pub(crate) fn axis_taps(src: usize, dst: usize, filter: ResampleFilter) -> AxisTaps {
    let (radius, kernel): (f64, fn(f64) -> f64) = match filter {
        ResampleFilter::Bilinear => (1.0, triangle),
        ResampleFilter::Lanczos3 => (3.0, lanczos3),
    };
    let scale = src as f64 / dst as f64;
    // widen the kernel when shrinking so it low-passes
    let stretch = scale.max(1.0);
    let support = radius * stretch;
    let mut start = Vec::with_capacity(dst);
    let mut weights = Vec::with_capacity(dst);
    for o in 0..dst {
        let center = (o as f64 + 0.5) * scale - 0.5;
        let lo = (center - support).floor() as isize + 1;
        let hi = (center + support).ceil() as isize - 1;
        let mut taps = vec![0.0; (hi - lo + 1) as usize];
        for (k, i) in (lo..=hi).enumerate() {
            taps[k] = kernel((i as f64 - center) / stretch);
        }
        // fold out-of-range taps onto the edge samples
        let first = lo.max(0) as usize;
        let last = (hi.min(src as isize - 1)) as usize;
        let mut folded = vec![0.0; last - first + 1];
        for (k, i) in (lo..=hi).enumerate() {
            let idx = i.clamp(first as isize, last as isize) as usize - first;
            folded[idx] += taps[k];
        }
        let sum: f64 = folded.iter().sum();
        folded.iter_mut().for_each(|t| *t /= sum);
        start.push(first);
        weights.push(folded);
    }
    AxisTaps { start, weights }
}

fn resize_plane(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize, filter: ResampleFilter) -> Vec<u8> {
    let htaps = axis_taps(sw, dw, filter);
    let vtaps = axis_taps(sh, dh, filter);
    let mut tmp = vec![0.0f64; dw * sh];
    tmp.par_chunks_mut(dw).enumerate().for_each(|(y, out)| {
        let row = &src[y * sw..(y + 1) * sw];
        for (x, o) in out.iter_mut().enumerate() {
            let s = htaps.start[x];
            *o = htaps.weights[x]
                .iter()
                .enumerate()
                .map(|(k, w)| w * row[s + k] as f64)
                .sum();
        }
    });
    let mut dst = vec![0u8; dw * dh];
    dst.par_chunks_mut(dw).enumerate().for_each(|(y, out)| {
        let s = vtaps.start[y];
        for (x, o) in out.iter_mut().enumerate() {
            let v: f64 = vtaps.weights[y]
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[(s + k) * dw + x])
                .sum();
            *o = to_sample(v);
        }
    });
    dst
}

/// Separable pixel-space resize; chroma planes are resized at half resolution.
pub fn resize(
    seq: &VideoSequence,
    target_w: usize,
    target_h: usize,
    filter: ResampleFilter,
) -> Result<VideoSequence> {
    check_geometry(target_w, target_h)?;
    if target_w == seq.width() && target_h == seq.height() {
        return Ok(seq.clone());
    }
    let frames = seq
        .frames()
        .iter()
        .map(|frame| {
            let planes: Vec<Vec<u8>> = (0..3)
                .map(|p| {
                    let (sw, sh) = frame.plane_dims(p);
                    let (dw, dh) = if p == 0 {
                        (target_w, target_h)
                    } else {
                        (target_w / 2, target_h / 2)
                    };
                    resize_plane(frame.plane(p), sw, sh, dw, dh, filter)
                })
                .collect();
            let [y, cb, cr]: [Vec<u8>; 3] = planes.try_into().expect("three planes");
            FrameBuffer::new(target_w, target_h, y, cb, cr)
        })
        .collect::<Result<Vec<_>>>()?;
    seq.with_frames(target_w, target_h, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::Rational;

    const EPS: f64 = 1e-12;

    fn close(d: Direction, e: [f64; 3]) -> bool {
        d.components().iter().zip(e).all(|(a, b)| (a - b).abs() < EPS)
    }

    #[test]
    fn erp_cardinal_points() {
        let (w, h) = (64, 32);
        let c = erp_to_direction(w as f64 / 2.0 - 0.5, h as f64 / 2.0 - 0.5, w, h).unwrap();
        assert!(close(c, [0.0, 0.0, 1.0]));
        let r = erp_to_direction(3.0 * w as f64 / 4.0 - 0.5, h as f64 / 2.0 - 0.5, w, h).unwrap();
        assert!(close(r, [1.0, 0.0, 0.0]));
        for u in [0.0, 10.3, 63.0] {
            let n = erp_to_direction(u, -0.5, w, h).unwrap();
            assert!(close(n, [0.0, 1.0, 0.0]), "{n:?}");
        }
        assert!(erp_to_direction(0.0, 0.0, 0, 4).is_err());
    }

    #[test]
    fn erp_inverse_fixed_points() {
        let (w, h) = (64, 32);
        let d = Direction::new(0.0, 0.0, 1.0).unwrap();
        assert_eq!(direction_to_erp(&d, w, h).unwrap(), (31.5, 15.5));
        let north = Direction::new(0.0, 1.0, 0.0).unwrap();
        assert_eq!(direction_to_erp(&north, w, h).unwrap(), (31.5, -0.5));
        let south = Direction::new(0.0, -1.0, 0.0).unwrap();
        assert_eq!(direction_to_erp(&south, w, h).unwrap(), (31.5, 31.5));
        // the back seam lands on the left edge, not past the right one
        let back = Direction::new(0.0, 0.0, -1.0).unwrap();
        assert_eq!(direction_to_erp(&back, w, h).unwrap().0, -0.5);
        assert!(Direction::new(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn face_centers_and_tie_break() {
        let f = direction_to_face(&Direction::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        assert_eq!((f.face, f.u, f.v), (FaceId::Front, 0.0, 0.0));
        let f = direction_to_face(&Direction::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!((f.face, f.u, f.v), (FaceId::Right, 0.0, 0.0));
        let f = direction_to_face(&Direction::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(f.face, FaceId::Front);
        assert!((f.u - 1.0).abs() < EPS && (f.v + 1.0).abs() < EPS);
        // edge shared by left and top goes to left
        let f = direction_to_face(&Direction::new(-1.0, 1.0, 0.0).unwrap()).unwrap();
        assert_eq!(f.face, FaceId::Left);
    }

    #[test]
    fn face_to_direction_centers() {
        for face in FaceId::ALL {
            let d = face_to_direction(&FaceCoord::new(face, 0.0, 0.0).unwrap()).unwrap();
            let back = direction_to_face(&d).unwrap();
            assert_eq!(back.face, face);
        }
        let top = face_to_direction(&FaceCoord::new(FaceId::Top, 0.0, 0.0).unwrap()).unwrap();
        assert!(close(top, [0.0, 1.0, 0.0]));
        assert!(FaceCoord::new(FaceId::Top, 1.5, 0.0).is_err());
        let raw = FaceCoord { face: FaceId::Top, u: 0.0, v: -1.01 };
        assert!(face_to_direction(&raw).is_err());
    }

    #[test]
    fn face_names_roundtrip() {
        for f in FaceId::ALL {
            assert_eq!(f.name().parse::<FaceId>().unwrap(), f);
        }
        assert!("side".parse::<FaceId>().is_err());
    }

    fn const_seq(w: usize, h: usize, y: u8) -> VideoSequence {
        let f = FrameBuffer::filled(w, h, y, 90, 200).unwrap();
        VideoSequence::erp(w, h, Rational::new(25, 1).unwrap(), vec![f.clone(), f]).unwrap()
    }

    #[test]
    fn constant_survives_projection_both_ways() {
        for filter in [ResampleFilter::Bilinear, ResampleFilter::Lanczos3] {
            let seq = const_seq(64, 32, 77);
            let faces = erp_to_cmp(&seq, 16, filter).unwrap();
            assert_eq!(faces.len(), 6);
            for (k, f) in faces.iter().enumerate() {
                assert_eq!(f.face(), Some(FaceId::ALL[k]));
                assert_eq!(f.fps(), seq.fps());
                for fr in f.frames() {
                    assert!(fr.luma().iter().all(|&s| s == 77));
                    assert!(fr.plane(1).iter().all(|&s| s == 90));
                    assert!(fr.plane(2).iter().all(|&s| s == 200));
                }
            }
            let back = cmp_to_erp(&faces, 64, 32, filter).unwrap();
            assert_eq!(back, seq);
        }
    }

    #[test]
    fn projection_rejects_bad_inputs() {
        let seq = const_seq(64, 32, 1);
        let faces = erp_to_cmp(&seq, 16, ResampleFilter::Bilinear).unwrap();
        assert!(erp_to_cmp(&faces[0], 8, ResampleFilter::Bilinear).is_err());
        assert!(erp_to_cmp(&seq, 15, ResampleFilter::Bilinear).is_err());
        assert!(cmp_to_erp(&faces[..5], 64, 32, ResampleFilter::Bilinear).is_err());
        let mut swapped = faces.clone();
        swapped.swap(0, 1);
        assert!(cmp_to_erp(&swapped, 64, 32, ResampleFilter::Bilinear).is_err());
    }

    #[test]
    fn resize_constant_and_identity() {
        let seq = const_seq(64, 32, 200);
        for filter in [ResampleFilter::Bilinear, ResampleFilter::Lanczos3] {
            let small = resize(&seq, 16, 8, filter).unwrap();
            assert!(small.frames()[0].luma().iter().all(|&s| s == 200));
            let big = resize(&seq, 96, 48, filter).unwrap();
            assert!(big.frames()[1].plane(2).iter().all(|&s| s == 200));
            assert_eq!(resize(&seq, 64, 32, filter).unwrap(), seq);
        }
        assert!(resize(&seq, 15, 8, ResampleFilter::Bilinear).is_err());
    }

    #[test]
    fn taps_are_normalized() {
        for (s, d) in [(64, 16), (16, 64), (33, 7), (8192, 2048)] {
            for f in [ResampleFilter::Bilinear, ResampleFilter::Lanczos3] {
                let t = axis_taps(s, d, f);
                for w in &t.weights {
                    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

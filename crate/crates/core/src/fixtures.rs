//! Synthetic test content and reference oracles.
//!
//! Cards are closed-form integer images, so regeneration is bit-exact.
//! The [`oracle`] module re-derives BD integrals, projection mappings and
//! cost-model timings without calling into the code it checks.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::media::{FrameBuffer, Rational, VideoSequence};

/// Frame rate stamped on generated cards.
pub const CARD_FPS: Rational = Rational { num: 30, den: 1 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestCard {
    Constant(u8),
    /// Luma ramps 0..255 left to right.
    HGradient,
    /// Cycles per frame width and height.
    Sinusoid { fx: f64, fy: f64 },
    /// Radial chirp reaching Nyquist at the frame edge.
    ZonePlate,
}

impl TestCard {
    fn luma(&self, i: usize, j: usize, w: usize, h: usize) -> u8 {
        let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
        let v = match *self {
            TestCard::Constant(c) => return c,
            TestCard::HGradient => return ((i % w) * 256 / w).min(255) as u8,
            TestCard::Sinusoid { fx, fy } => {
                127.5 + 127.5 * (std::f64::consts::TAU * (fx * x / w as f64 + fy * y / h as f64)).sin()
            }
            TestCard::ZonePlate => {
                let dx = x - w as f64 / 2.0;
                let dy = y - h as f64 / 2.0;
                let scale = w.max(h) as f64;
                127.5 + 127.5 * (std::f64::consts::PI * (dx * dx + dy * dy) / scale).cos()
            }
        };
        v.round().clamp(0.0, 255.0) as u8
    }
}

impl fmt::Display for TestCard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestCard::Constant(c) => write!(f, "constant:{c}"),
            TestCard::HGradient => f.write_str("hgradient"),
            TestCard::Sinusoid { fx, fy } => write!(f, "sinusoid:{fx}:{fy}"),
            TestCard::ZonePlate => f.write_str("zoneplate"),
        }
    }
}

impl FromStr for TestCard {
    type Err = Error;

    /// `constant[:v]`, `hgradient`, `sinusoid[:fx[:fy]]` or `zoneplate`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let kind = parts.next().unwrap_or_default().to_ascii_lowercase();
        let args: Vec<&str> = parts.collect();
        let bad = || Error::Config(format!("bad test card `{s}`"));
        let num = |k: usize, default: f64| -> Result<f64> {
            args.get(k).map_or(Ok(default), |a| a.parse().map_err(|_| bad()))
        };
        let card = match kind.as_str() {
            "constant" => TestCard::Constant(args.first().map_or(Ok(128), |a| a.parse().map_err(|_| bad()))?),
            "hgradient" => TestCard::HGradient,
            "sinusoid" => TestCard::Sinusoid {
                fx: num(0, 4.0)?,
                fy: num(1, 0.0)?,
            },
            "zoneplate" => TestCard::ZonePlate,
            _ => return Err(bad()),
        };
        let max_args = match card {
            TestCard::Constant(_) => 1,
            TestCard::Sinusoid { .. } => 2,
            _ => 0,
        };
        if args.len() > max_args {
            return Err(bad());
        }
        Ok(card)
    }
}

/// ERP card sequence; frame `t` is the card shifted left by `t` pixels.
pub fn generate_card(card: TestCard, width: usize, height: usize, frames: usize) -> Result<VideoSequence> {
    crate::media::check_geometry(width, height)?;
    let chroma = vec![128u8; width * height / 4];
    let out = (0..frames)
        .map(|t| {
            let mut y = Vec::with_capacity(width * height);
            for j in 0..height {
                y.extend((0..width).map(|i| card.luma(i + t, j, width, height)));
            }
            FrameBuffer::new(width, height, y, chroma.clone(), chroma.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    VideoSequence::erp(width, height, CARD_FPS, out)
}

pub mod oracle {
    //! Brute-force counterparts of production computations, for tests only.

    use crate::bd::RdCurve;
    use crate::error::{Error, Result};
    use crate::exec::CostModel;
    use crate::plan::{AnchorPolicy, Ladder, Variant};
    use crate::sphere::FaceId;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum BdKind {
        /// dB gap at equal log-rate.
        Quality,
        /// Percent rate change at equal quality.
        Rate,
        /// Percent time change at equal quality.
        Time,
    }

    /// Monotone cubic Hermite interpolant with harmonic-mean interior slopes.
    pub struct MonotoneCubic {
        x: Vec<f64>,
        y: Vec<f64>,
        d: Vec<f64>,
    }

    impl MonotoneCubic {
        pub fn new(x: &[f64], y: &[f64]) -> Self {
            let n = x.len();
            let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();
            let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
            let mut d = vec![0.0; n];
            if n == 2 {
                d = vec![m[0], m[0]];
            } else {
                for k in 1..n - 1 {
                    let same_sign = (m[k - 1] > 0.0 && m[k] > 0.0) || (m[k - 1] < 0.0 && m[k] < 0.0);
                    if same_sign {
                        let w1 = 2.0 * h[k] + h[k - 1];
                        let w2 = h[k] + 2.0 * h[k - 1];
                        d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
                    }
                }
                d[0] = end_slope(h[0], h[1], m[0], m[1]);
                d[n - 1] = end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
            }
            MonotoneCubic {
                x: x.to_vec(),
                y: y.to_vec(),
                d,
            }
        }

        pub fn eval(&self, t: f64) -> f64 {
            let n = self.x.len();
            let mut k = 0;
            while k + 2 < n && t > self.x[k + 1] {
                k += 1;
            }
            let h = self.x[k + 1] - self.x[k];
            let s = (t - self.x[k]) / h;
            let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            let h10 = s * (1.0 - s) * (1.0 - s);
            let h01 = s * s * (3.0 - 2.0 * s);
            let h11 = s * s * (s - 1.0);
            h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
        }
    }

    fn sgn(v: f64) -> i32 {
        (v > 0.0) as i32 - (v < 0.0) as i32
    }

    fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
        let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if sgn(d) != sgn(m0) {
            0.0
        } else if sgn(m0) != sgn(m1) && d.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            d
        }
    }

    fn trapezoid(f: &MonotoneCubic, lo: f64, hi: f64, samples: usize) -> f64 {
        let step = (hi - lo) / samples as f64;
        let mut acc = 0.5 * (f.eval(lo) + f.eval(hi));
        for k in 1..samples {
            acc += f.eval(lo + k as f64 * step);
        }
        acc * step
    }

    /// Dense trapezoidal BD value over monotone cubic interpolants.
    pub fn numeric_bd_oracle(reference: &RdCurve, test: &RdCurve, kind: BdKind, samples: usize) -> Result<f64> {
        let axes = |c: &RdCurve| -> Result<(Vec<f64>, Vec<f64>)> {
            let p = c.points();
            Ok(match kind {
                BdKind::Quality => (
                    p.iter().map(|p| p.rate_kbps.log10()).collect(),
                    p.iter().map(|p| p.quality_db).collect(),
                ),
                BdKind::Rate => (
                    p.iter().map(|p| p.quality_db).collect(),
                    p.iter().map(|p| p.rate_kbps.log10()).collect(),
                ),
                BdKind::Time => (
                    p.iter().map(|p| p.quality_db).collect(),
                    p.iter()
                        .map(|p| p.time_s.map(f64::log10).ok_or_else(|| Error::Curve("missing time".into())))
                        .collect::<Result<_>>()?,
                ),
            })
        };
        let (rx, ry) = axes(reference)?;
        let (tx, ty) = axes(test)?;
        let lo = rx[0].max(tx[0]);
        let hi = rx[rx.len() - 1].min(tx[tx.len() - 1]);
        if !(hi > lo) {
            return Err(Error::Curve("no overlap".into()));
        }
        let gap = (trapezoid(&MonotoneCubic::new(&tx, &ty), lo, hi, samples)
            - trapezoid(&MonotoneCubic::new(&rx, &ry), lo, hi, samples))
            / (hi - lo);
        Ok(match kind {
            BdKind::Quality => gap,
            _ => (10f64.powf(gap) - 1.0) * 100.0,
        })
    }

    /// Unit direction through the center of face pixel (i, j) on an n×n face.
    pub fn face_pixel_direction(face: FaceId, i: usize, j: usize, n: usize) -> [f64; 3] {
        let u = 2.0 * (i as f64 + 0.5) / n as f64 - 1.0;
        let v = 2.0 * (j as f64 + 0.5) / n as f64 - 1.0;
        // (normal, right, down) basis of each face
        let (nrm, right, down): ([f64; 3], [f64; 3], [f64; 3]) = match face {
            FaceId::Front => ([0., 0., 1.], [1., 0., 0.], [0., -1., 0.]),
            FaceId::Back => ([0., 0., -1.], [-1., 0., 0.], [0., -1., 0.]),
            FaceId::Left => ([-1., 0., 0.], [0., 0., 1.], [0., -1., 0.]),
            FaceId::Right => ([1., 0., 0.], [0., 0., -1.], [0., -1., 0.]),
            FaceId::Top => ([0., 1., 0.], [1., 0., 0.], [0., 0., 1.]),
            FaceId::Bottom => ([0., -1., 0.], [1., 0., 0.], [0., 0., -1.]),
        };
        let p: [f64; 3] = std::array::from_fn(|k| nrm[k] + u * right[k] + v * down[k]);
        let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        p.map(|c| c / len)
    }

    /// Continuous ERP pixel position of a unit direction.
    pub fn direction_erp_position(d: [f64; 3], w: usize, h: usize) -> (f64, f64) {
        let lon = d[0].atan2(d[2]);
        let lat = d[1].clamp(-1.0, 1.0).asin();
        let u = (lon + std::f64::consts::PI) / std::f64::consts::TAU * w as f64 - 0.5;
        let v = (std::f64::consts::FRAC_PI_2 - lat) / std::f64::consts::PI * h as f64 - 0.5;
        (u, v)
    }

    /// Per-representation simulated encode times `[tier][qp]` for one tile,
    /// written out from the variant definitions rather than from a plan.
    pub fn simulated_times(
        variant: Variant,
        ladder: &Ladder,
        anchor: AnchorPolicy,
        frames: usize,
        model: &CostModel,
    ) -> Vec<Vec<f64>> {
        let q = &ladder.qualities;
        let anchor_q = match anchor {
            AnchorPolicy::Hq => q[0],
            AnchorPolicy::Lq => q[q.len() - 1],
            AnchorPolicy::Mq => q[(q.len() - 1) / 2],
        };
        ladder
            .tiers
            .iter()
            .enumerate()
            .map(|(t, tier)| {
                let side = if variant.is_cmp() { tier.height / 2 } else { 0 };
                let (w, h) = if variant.is_cmp() { (side, side) } else { (tier.width, tier.height) };
                q.iter()
                    .map(|&qp| {
                        let full = model.kappa * (w * h) as f64 / 1e6 * frames as f64 * (1.0 + (51.0 - qp as f64) / 51.0);
                        let searched = match variant {
                            Variant::ErpDefault => true,
                            Variant::ErpCrc | Variant::CmpCrc => t == 0 && qp == anchor_q,
                            Variant::ErpPra | Variant::CmpPra => qp == anchor_q,
                        };
                        if searched {
                            full
                        } else {
                            model.rho * full
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Reuse-chain depth of each `[tier][qp]` node, per the variant definitions.
    pub fn reuse_depths(variant: Variant, ladder: &Ladder, anchor: AnchorPolicy) -> Vec<Vec<u32>> {
        let q = &ladder.qualities;
        let anchor_q = match anchor {
            AnchorPolicy::Hq => q[0],
            AnchorPolicy::Lq => q[q.len() - 1],
            AnchorPolicy::Mq => q[(q.len() - 1) / 2],
        };
        let top = ladder.tiers.len() - 1;
        (0..=top)
            .map(|t| {
                q.iter()
                    .map(|&qp| {
                        let is_anchor = qp == anchor_q;
                        match variant {
                            Variant::ErpDefault => 0,
                            Variant::ErpPra | Variant::CmpPra => u32::from(!is_anchor),
                            Variant::ErpCrc | Variant::CmpCrc => {
                                if t > 0 && t == top {
                                    t as u32
                                } else {
                                    t as u32 + u32::from(!is_anchor)
                                }
                            }
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

//! OMAF-flavored DASH manifest for an encoded ladder.
//!
//! Profile: static on-demand MPD, one single-file representation per encode,
//! one adaptation set per tile. Every adaptation set carries an
//! `EssentialProperty` with scheme `urn:mpeg:mpegI:omaf:2017:pf` (value 0
//! for ERP, 1 for cubemap). Cubemap faces also carry an SRD
//! `SupplementalProperty` (`urn:mpeg:dash:srd:2014`) placing them on a 3×2
//! unit grid in face order: front, back, left on the top row; right, top,
//! bottom below.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::EncodeResult;
use crate::media::{Projection, Rational};
use crate::plan::{EncodePlan, Tile};

pub const PROJECTION_SCHEME: &str = "urn:mpeg:mpegI:omaf:2017:pf";
pub const SRD_SCHEME: &str = "urn:mpeg:dash:srd:2014";
pub const ON_DEMAND_PROFILE: &str = "urn:mpeg:dash:profile:isoff-on-demand:2011";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub id: String,
    pub bandwidth: u64,
    pub width: usize,
    pub height: usize,
    pub codecs: String,
    pub base_url: String,
}

/// Position of a tile on the 3×2 face grid, in face units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationSet {
    pub id: usize,
    pub tile: Tile,
    pub region: Option<Region>,
    pub representations: Vec<Representation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationManifest {
    pub projection: Projection,
    pub fps: Rational,
    pub duration_s: f64,
    pub adaptation_sets: Vec<AdaptationSet>,
}

/// HEVC Main-profile codec string with the smallest level fitting the picture size.
pub fn hevc_codec_tag(width: usize, height: usize) -> String {
    const LEVELS: [(usize, u32); 8] = [
        (36_864, 30),
        (122_880, 60),
        (245_760, 63),
        (552_960, 90),
        (983_040, 93),
        (2_228_224, 120),
        (8_912_896, 150),
        (35_651_584, 180),
    ];
    let ps = width * height;
    let level = LEVELS.iter().find(|(max, _)| ps <= *max).map_or(186, |l| l.1);
    format!("hvc1.1.6.L{level}.90")
}

impl PresentationManifest {
    pub fn validate(&self) -> Result<()> {
        let want = match self.projection {
            Projection::Erp => 1,
            Projection::CmpFace => 6,
        };
        if self.adaptation_sets.len() != want {
            return Err(Error::Manifest(format!(
                "{:?} presentation needs {want} adaptation set(s), found {}",
                self.projection,
                self.adaptation_sets.len()
            )));
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::Manifest("duration must be positive".into()));
        }
        let mut ids = HashSet::new();
        for a in &self.adaptation_sets {
            if a.representations.is_empty() {
                return Err(Error::Manifest(format!("adaptation set {} is empty", a.id)));
            }
            for r in &a.representations {
                if r.bandwidth == 0 {
                    return Err(Error::Manifest(format!("representation {} has zero bandwidth", r.id)));
                }
                if !ids.insert(r.id.as_str()) {
                    return Err(Error::Manifest(format!("duplicate representation id {}", r.id)));
                }
            }
        }
        Ok(())
    }

    pub fn representation_count(&self) -> usize {
        self.adaptation_sets.iter().map(|a| a.representations.len()).sum()
    }
}

/// Groups `results` by tile, one representation per plan node.
pub fn build_manifest(
    plan: &EncodePlan,
    results: &[EncodeResult],
    fps: Rational,
    frames: usize,
) -> Result<PresentationManifest> {
    if results.is_empty() {
        return Err(Error::Manifest("no encode results".into()));
    }
    let mut seen = HashSet::new();
    for r in results {
        if !seen.insert(r.node) {
            return Err(Error::Manifest(format!("duplicate result for {}", r.node)));
        }
        if plan.node(&r.node).is_none() {
            return Err(Error::Manifest(format!("result for {} is not in the plan", r.node)));
        }
    }
    if frames == 0 {
        return Err(Error::Manifest("sequence has no frames".into()));
    }
    let adaptation_sets = plan
        .tiles
        .iter()
        .enumerate()
        .map(|(id, &tile)| {
            let representations = plan
                .nodes
                .iter()
                .filter(|n| n.id.tile == tile)
                .map(|n| {
                    let r = results
                        .iter()
                        .find(|r| r.node == n.id)
                        .ok_or_else(|| Error::Manifest(format!("missing result for {}", n.id)))?;
                    Ok(Representation {
                        id: n.stem(),
                        bandwidth: (r.bitrate_kbps * 1000.0).round() as u64,
                        width: n.width,
                        height: n.height,
                        codecs: hevc_codec_tag(n.width, n.height),
                        base_url: r.bitstream.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let region = tile.face().map(|f| Region {
                x: (f.index() % 3) as u32,
                y: (f.index() / 3) as u32,
            });
            Ok(AdaptationSet {
                id,
                tile,
                region,
                representations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = PresentationManifest {
        projection: if plan.variant.is_cmp() {
            Projection::CmpFace
        } else {
            Projection::Erp
        },
        fps,
        duration_s: frames as f64 / fps.as_f64(),
        adaptation_sets,
    };
    m.validate()?;
    Ok(m)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn iso_duration(s: f64) -> String {
    format!("PT{s:.3}S")
}

fn frame_rate(fps: Rational) -> String {
    if fps.den == 1 {
        fps.num.to_string()
    } else {
        format!("{}/{}", fps.num, fps.den)
    }
}

/// Serializes a validated manifest; output is a pure function of the input.
pub fn serialize_mpd(m: &PresentationManifest) -> Result<String> {
    m.validate()?;
    let proj = match m.projection {
        Projection::Erp => 0,
        Projection::CmpFace => 1,
    };
    let dur = iso_duration(m.duration_s);
    let mut x = String::new();
    // writing into a String cannot fail
    let _ = writeln!(x, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        x,
        r#"<MPD xmlns="urn:mpeg:dash:schema:mpd:2011" xmlns:omaf="urn:mpeg:mpegI:omaf:2017" type="static" profiles="{ON_DEMAND_PROFILE}" mediaPresentationDuration="{dur}" minBufferTime="PT2.000S">"#
    );
    let _ = writeln!(x, r#"  <Period id="0" start="PT0S" duration="{dur}">"#);
    for a in &m.adaptation_sets {
        let _ = writeln!(
            x,
            r#"    <AdaptationSet id="{}" contentType="video" mimeType="video/mp4" frameRate="{}" segmentAlignment="true" subsegmentAlignment="true" subsegmentStartsWithSAP="1">"#,
            a.id,
            frame_rate(m.fps)
        );
        let _ = writeln!(
            x,
            r#"      <EssentialProperty schemeIdUri="{PROJECTION_SCHEME}" value="{proj}"/>"#
        );
        if let Some(r) = a.region {
            let _ = writeln!(
                x,
                r#"      <SupplementalProperty schemeIdUri="{SRD_SCHEME}" value="0,{},{},1,1,3,2"/>"#,
                r.x, r.y
            );
        }
        let _ = writeln!(x, r#"      <Role schemeIdUri="urn:mpeg:dash:role:2011" value="main"/>"#);
        for r in &a.representations {
            let _ = writeln!(
                x,
                r#"      <Representation id="{}" bandwidth="{}" width="{}" height="{}" codecs="{}">"#,
                escape(&r.id),
                r.bandwidth,
                r.width,
                r.height,
                escape(&r.codecs)
            );
            let _ = writeln!(x, "        <BaseURL>{}</BaseURL>", escape(&r.base_url));
            let _ = writeln!(x, "      </Representation>");
        }
        let _ = writeln!(x, "    </AdaptationSet>");
    }
    let _ = writeln!(x, "  </Period>");
    let _ = writeln!(x, "</MPD>");
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codec_levels() {
        assert_eq!(hevc_codec_tag(64, 32), "hvc1.1.6.L30.90");
        assert_eq!(hevc_codec_tag(2048, 1024), "hvc1.1.6.L120.90");
        assert_eq!(hevc_codec_tag(4096, 2048), "hvc1.1.6.L150.90");
        assert_eq!(hevc_codec_tag(8192, 4096), "hvc1.1.6.L180.90");
        assert_eq!(hevc_codec_tag(16384, 8192), "hvc1.1.6.L186.90");
    }

    #[test]
    fn escaping() {
        assert_eq!(escape(r#"a&b<"c'>"#), "a&amp;b&lt;&quot;c&apos;&gt;");
        assert_eq!(frame_rate(Rational { num: 30000, den: 1001 }), "30000/1001");
        assert_eq!(iso_duration(2.0), "PT2.000S");
    }
}

//! Anchor/dependent encode plans for the five framework variants.
//!
//! A plan is a DAG of encode nodes, one per (tile, resolution tier, QP).
//! Anchors run a full search and save their analysis; dependents load an
//! analysis file, scaled by 2 when it comes from the tier below.
//!
//! * Default: every node runs a full search, no edges.
//! * CRC: one full-search anchor at the lowest tier. Each higher tier's
//!   anchor loads the previous saved analysis at scale 2 and re-saves,
//!   except the top tier, where every node loads from the tier below and
//!   nothing saves. That stores `N - 1` analysis files per tile.
//! * PRA: a full-search anchor per tier, dependents load it at scale 1.
//!   That stores `N` analysis files per tile. With `cross_resolution_pra`
//!   each anchor above the lowest instead loads the anchor below at scale 2.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::FaceId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ErpDefault,
    ErpCrc,
    ErpPra,
    CmpCrc,
    CmpPra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Default,
    Crc,
    Pra,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::ErpDefault,
        Variant::ErpCrc,
        Variant::ErpPra,
        Variant::CmpCrc,
        Variant::CmpPra,
    ];

    pub fn is_cmp(self) -> bool {
        matches!(self, Variant::CmpCrc | Variant::CmpPra)
    }

    pub fn strategy(self) -> Strategy {
        match self {
            Variant::ErpDefault => Strategy::Default,
            Variant::ErpCrc | Variant::CmpCrc => Strategy::Crc,
            Variant::ErpPra | Variant::CmpPra => Strategy::Pra,
        }
    }

    pub fn tiles(self) -> Vec<Tile> {
        if self.is_cmp() {
            FaceId::ALL.into_iter().map(Tile::Face).collect()
        } else {
            vec![Tile::Erp]
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::ErpDefault => "erp-default",
            Variant::ErpCrc => "erp-crc",
            Variant::ErpPra => "erp-pra",
            Variant::CmpCrc => "cmp-crc",
            Variant::CmpPra => "cmp-pra",
        }
    }

    /// Display label in the `ERP-CRC` style.
    pub fn label(self) -> String {
        self.name().to_ascii_uppercase().replace("DEFAULT", "Default")
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Plan(format!("unknown variant `{s}`")))
    }
}

/// Independently encoded picture region: the full ERP frame or one face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tile {
    Erp,
    Face(FaceId),
}

impl Tile {
    pub fn name(self) -> &'static str {
        match self {
            Tile::Erp => "erp",
            Tile::Face(f) => f.name(),
        }
    }

    pub fn face(self) -> Option<FaceId> {
        match self {
            Tile::Erp => None,
            Tile::Face(f) => Some(f),
        }
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("erp") {
            Ok(Tile::Erp)
        } else {
            s.parse().map(Tile::Face)
        }
    }
}

impl Serialize for Tile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Tile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One resolution tier, given as ERP frame geometry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tier {
    pub name: String,
    pub width: usize,
    pub height: usize,
}

impl Tier {
    pub fn new(name: &str, width: usize, height: usize) -> Self {
        Tier {
            name: name.to_string(),
            width,
            height,
        }
    }

    /// Cubemap face edge for this tier: ERP height / 2.
    pub fn face_size(&self) -> usize {
        self.height / 2
    }

    /// Encode geometry of `tile` at this tier.
    pub fn geometry(&self, tile: Tile) -> (usize, usize) {
        match tile {
            Tile::Erp => (self.width, self.height),
            Tile::Face(_) => (self.face_size(), self.face_size()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    #[default]
    FixedQp,
    Crf,
}

/// Resolution tiers (ascending area) crossed with quality levels (ascending QP).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ladder {
    pub tiers: Vec<Tier>,
    pub qualities: Vec<u8>,
    #[serde(default)]
    pub mode: RateMode,
}

impl Ladder {
    /// HD/4K/8K ERP tiers with QPs 22..42 in steps of 5.
    pub fn standard() -> Self {
        Ladder {
            tiers: vec![
                Tier::new("HD", 2048, 1024),
                Tier::new("4K", 4096, 2048),
                Tier::new("8K", 8192, 4096),
            ],
            qualities: vec![22, 27, 32, 37, 42],
            mode: RateMode::FixedQp,
        }
    }

    /// The standard ladder with every tier scaled down by `divisor`.
    pub fn scaled(divisor: usize) -> Self {
        let mut l = Self::standard();
        for t in &mut l.tiers {
            t.width /= divisor;
            t.height /= divisor;
        }
        l
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() || self.qualities.is_empty() {
            return Err(Error::Ladder("needs at least one tier and one quality".into()));
        }
        if self.qualities.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Ladder("qualities must strictly increase".into()));
        }
        if let Some(q) = self.qualities.iter().find(|&&q| q > 51) {
            return Err(Error::Ladder(format!("quality {q} exceeds 51")));
        }
        let mut names = HashSet::new();
        for t in &self.tiers {
            if t.width == 0 || t.height == 0 || t.width % 2 != 0 || t.height % 2 != 0 {
                return Err(Error::Ladder(format!("tier {} has invalid geometry {}x{}", t.name, t.width, t.height)));
            }
            if !names.insert(&t.name) {
                return Err(Error::Ladder(format!("duplicate tier name {}", t.name)));
            }
        }
        if self
            .tiers
            .windows(2)
            .any(|w| w[1].width * w[1].height <= w[0].width * w[0].height)
        {
            return Err(Error::Ladder("tiers must be ordered by ascending area".into()));
        }
        Ok(())
    }

    pub fn tier_index(&self, name: &str) -> Option<usize> {
        self.tiers.iter().position(|t| t.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorPolicy {
    Lq,
    Mq,
    Hq,
}

impl AnchorPolicy {
    pub const ALL: [AnchorPolicy; 3] = [AnchorPolicy::Lq, AnchorPolicy::Mq, AnchorPolicy::Hq];

    /// HQ picks the lowest QP, LQ the highest, MQ the lower median.
    pub fn select(self, qualities: &[u8]) -> u8 {
        match self {
            AnchorPolicy::Hq => qualities[0],
            AnchorPolicy::Lq => qualities[qualities.len() - 1],
            AnchorPolicy::Mq => qualities[(qualities.len() - 1) / 2],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AnchorPolicy::Lq => "lq",
            AnchorPolicy::Mq => "mq",
            AnchorPolicy::Hq => "hq",
        }
    }
}

impl fmt::Display for AnchorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_ascii_uppercase())
    }
}

impl FromStr for AnchorPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnchorPolicy::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Plan(format!("unknown anchor policy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub tile: Tile,
    pub tier: usize,
    pub qp: u8,
}

impl NodeId {
    pub fn new(tile: Tile, tier: usize, qp: u8) -> Self {
        NodeId { tile, tier, qp }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/t{}/q{}", self.tile, self.tier, self.qp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeMode {
    FullRdo,
    AnalysisLoad { source: NodeId, scale_factor: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodeNode {
    pub id: NodeId,
    pub width: usize,
    pub height: usize,
    pub mode: NodeMode,
    pub save_analysis: bool,
}

impl EncodeNode {
    /// File stem shared by every artifact of this node: `<tile>_<WxH>_<qp>`.
    pub fn stem(&self) -> String {
        format!("{}_{}x{}_{}", self.id.tile, self.width, self.height, self.id.qp)
    }

    pub fn source(&self) -> Option<NodeId> {
        match self.mode {
            NodeMode::FullRdo => None,
            NodeMode::AnalysisLoad { source, .. } => Some(source),
        }
    }

    pub fn is_full_rdo(&self) -> bool {
        self.mode == NodeMode::FullRdo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: NodeId,
    pub target: NodeId,
    pub scale_factor: u8,
}

/// Output file-name templates; `{stem}` expands to [`EncodeNode::stem`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileTemplates {
    pub input: String,
    pub bitstream: String,
    pub analysis: String,
    pub recon: String,
}

impl Default for FileTemplates {
    fn default() -> Self {
        FileTemplates {
            input: "{tile}_{width}x{height}.y4m".into(),
            bitstream: "{stem}.hevc".into(),
            analysis: "{stem}.analysis".into(),
            recon: "{stem}.recon.y4m".into(),
        }
    }
}

impl FileTemplates {
    pub fn input_name(&self, tile: Tile, width: usize, height: usize) -> String {
        self.input
            .replace("{tile}", tile.name())
            .replace("{width}", &width.to_string())
            .replace("{height}", &height.to_string())
    }

    pub fn expand(template: &str, node: &EncodeNode) -> String {
        template.replace("{stem}", &node.stem())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanOptions {
    /// PRA only: anchors above the lowest tier load the anchor below.
    #[serde(default)]
    pub cross_resolution_pra: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodePlan {
    pub variant: Variant,
    pub anchor: AnchorPolicy,
    pub ladder: Ladder,
    #[serde(default)]
    pub options: PlanOptions,
    pub tiles: Vec<Tile>,
    pub nodes: Vec<EncodeNode>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub templates: FileTemplates,
}

impl EncodePlan {
    pub fn node(&self, id: &NodeId) -> Option<&EncodeNode> {
        self.nodes.iter().find(|n| n.id == *id)
    }

    pub fn index(&self) -> HashMap<NodeId, usize> {
        self.nodes.iter().enumerate().map(|(k, n)| (n.id, k)).collect()
    }

    pub fn nodes_in_tier(&self, tier: usize) -> impl Iterator<Item = &EncodeNode> {
        self.nodes.iter().filter(move |n| n.id.tier == tier)
    }
}

fn load(source: NodeId, scale_factor: u8) -> NodeMode {
    NodeMode::AnalysisLoad {
        source,
        scale_factor,
    }
}

/// Builds the encode DAG for `variant` over `ladder`.
pub fn build_plan(
    variant: Variant,
    ladder: &Ladder,
    anchor: AnchorPolicy,
    options: PlanOptions,
) -> Result<EncodePlan> {
    ladder.validate()?;
    let strategy = variant.strategy();
    if strategy == Strategy::Crc {
        for w in ladder.tiers.windows(2) {
            if w[1].width != 2 * w[0].width || w[1].height != 2 * w[0].height {
                return Err(Error::Ladder(format!(
                    "cascaded reuse needs each tier to double the previous ({} -> {})",
                    w[0].name, w[1].name
                )));
            }
        }
    }
    if options.cross_resolution_pra && strategy == Strategy::Pra {
        for w in ladder.tiers.windows(2) {
            if w[1].width != 2 * w[0].width || w[1].height != 2 * w[0].height {
                return Err(Error::Ladder("cross-resolution anchors need doubling tiers".into()));
            }
        }
    }
    if variant.is_cmp() {
        if let Some(t) = ladder.tiers.iter().find(|t| t.face_size() % 2 != 0) {
            return Err(Error::Ladder(format!(
                "tier {} gives an odd face size {}",
                t.name,
                t.face_size()
            )));
        }
    }

    let anchor_q = anchor.select(&ladder.qualities);
    let top = ladder.tiers.len() - 1;
    let tiles = variant.tiles();
    let mut nodes = Vec::with_capacity(tiles.len() * ladder.tiers.len() * ladder.qualities.len());
    for &tile in &tiles {
        for (tier, t) in ladder.tiers.iter().enumerate() {
            let (width, height) = t.geometry(tile);
            let here = |qp| NodeId::new(tile, tier, qp);
            let below = |qp| NodeId::new(tile, tier.wrapping_sub(1), qp);
            for &qp in &ladder.qualities {
                let is_anchor = qp == anchor_q;
                let (mode, save) = match strategy {
                    Strategy::Default => (NodeMode::FullRdo, false),
                    Strategy::Pra => {
                        let cross = options.cross_resolution_pra && tier > 0;
                        match (is_anchor, cross) {
                            (true, false) => (NodeMode::FullRdo, true),
                            (true, true) => (load(below(anchor_q), 2), true),
                            (false, _) => (load(here(anchor_q), 1), false),
                        }
                    }
                    Strategy::Crc => {
                        // a single-tier ladder keeps the saving anchor for its own dependents
                        match (tier, is_anchor) {
                            (0, true) => (NodeMode::FullRdo, true),
                            (0, false) => (load(here(anchor_q), 1), false),
                            (t, _) if t == top => (load(below(anchor_q), 2), false),
                            (_, true) => (load(below(anchor_q), 2), true),
                            (_, false) => (load(here(anchor_q), 1), false),
                        }
                    }
                };
                nodes.push(EncodeNode {
                    id: here(qp),
                    width,
                    height,
                    mode,
                    save_analysis: save,
                });
            }
        }
    }
    let edges = nodes
        .iter()
        .filter_map(|n| match n.mode {
            NodeMode::FullRdo => None,
            NodeMode::AnalysisLoad {
                source,
                scale_factor,
            } => Some(Edge {
                source,
                target: n.id,
                scale_factor,
            }),
        })
        .collect();
    Ok(EncodePlan {
        variant,
        anchor,
        ladder: ladder.clone(),
        options,
        tiles,
        nodes,
        edges,
        templates: FileTemplates::default(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DuplicateNode(NodeId),
    MissingSource { node: NodeId, source: NodeId },
    SourceNotSaving { node: NodeId, source: NodeId },
    ScaleFactor { node: NodeId, source: NodeId, scale_factor: u8 },
    TileCrossing { node: NodeId, source: NodeId },
    EdgeMismatch(Edge),
    MissingEdge(NodeId),
    Cycle(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateNode(n) => write!(f, "duplicate node {n}"),
            Violation::MissingSource { node, source } => write!(f, "{node}: source {source} is not in the plan"),
            Violation::SourceNotSaving { node, source } => write!(f, "{node}: source {source} does not save analysis"),
            Violation::ScaleFactor { node, source, scale_factor } => {
                write!(f, "{node}: scale factor {scale_factor} does not match geometry of {source}")
            }
            Violation::TileCrossing { node, source } => write!(f, "{node}: source {source} is on another tile"),
            Violation::EdgeMismatch(e) => write!(f, "edge {} -> {} does not match node modes", e.source, e.target),
            Violation::MissingEdge(n) => write!(f, "{n}: load node has no edge"),
            Violation::Cycle(n) => write!(f, "{n}: analysis chain is cyclic"),
        }
    }
}

/// Structural checks; returns every violation found (empty means valid).
pub fn validate_plan(plan: &EncodePlan) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut by_id: HashMap<NodeId, &EncodeNode> = HashMap::new();
    for n in &plan.nodes {
        if by_id.insert(n.id, n).is_some() {
            out.push(Violation::DuplicateNode(n.id));
        }
    }
    for n in &plan.nodes {
        let NodeMode::AnalysisLoad { source, scale_factor } = n.mode else {
            continue;
        };
        let Some(src) = by_id.get(&source) else {
            out.push(Violation::MissingSource { node: n.id, source });
            continue;
        };
        if !src.save_analysis {
            out.push(Violation::SourceNotSaving { node: n.id, source });
        }
        if src.id.tile != n.id.tile {
            out.push(Violation::TileCrossing { node: n.id, source });
        }
        let same = src.width == n.width && src.height == n.height;
        let half = 2 * src.width == n.width && 2 * src.height == n.height;
        let ok = match scale_factor {
            1 => same,
            2 => half,
            _ => false,
        };
        if !ok {
            out.push(Violation::ScaleFactor {
                node: n.id,
                source,
                scale_factor,
            });
        }
    }

    let mut expected: HashSet<Edge> = plan
        .nodes
        .iter()
        .filter_map(|n| match n.mode {
            NodeMode::AnalysisLoad { source, scale_factor } => Some(Edge {
                source,
                target: n.id,
                scale_factor,
            }),
            NodeMode::FullRdo => None,
        })
        .collect();
    for e in &plan.edges {
        if !expected.remove(e) {
            out.push(Violation::EdgeMismatch(*e));
            if let Some(src) = by_id.get(&e.source) {
                if src.id.tile != e.target.tile
                    && !out.iter().any(|v| matches!(v, Violation::TileCrossing { node, .. } if *node == e.target))
                {
                    out.push(Violation::TileCrossing {
                        node: e.target,
                        source: e.source,
                    });
                }
            }
        }
    }
    let mut missing: Vec<_> = expected.into_iter().map(|e| e.target).collect();
    missing.sort();
    out.extend(missing.into_iter().map(Violation::MissingEdge));

    // each node has at most one source, so walking the chain detects cycles
    for n in &plan.nodes {
        let mut seen = HashSet::from([n.id]);
        let mut cur = n.source();
        while let Some(id) = cur {
            if !seen.insert(id) {
                out.push(Violation::Cycle(n.id));
                break;
            }
            cur = by_id.get(&id).and_then(|m| m.source());
        }
    }
    out
}

/// Number of nodes saving analysis, per tile.
pub fn plan_storage_count(plan: &EncodePlan) -> BTreeMap<Tile, usize> {
    let mut counts: BTreeMap<Tile, usize> = plan.tiles.iter().map(|&t| (t, 0)).collect();
    for n in plan.nodes.iter().filter(|n| n.save_analysis) {
        *counts.entry(n.id.tile).or_default() += 1;
    }
    counts
}

/// Reuse-chain depth of every node: 0 for full search, source depth + 1 otherwise.
pub fn reuse_depths(plan: &EncodePlan) -> Result<HashMap<NodeId, u32>> {
    let by_id: HashMap<NodeId, &EncodeNode> = plan.nodes.iter().map(|n| (n.id, n)).collect();
    let mut depths = HashMap::new();
    for n in &plan.nodes {
        let mut d = 0u32;
        let mut cur = n.source();
        while let Some(id) = cur {
            d += 1;
            if d as usize > plan.nodes.len() {
                return Err(Error::Plan(format!("{}: cyclic analysis chain", n.id)));
            }
            cur = by_id
                .get(&id)
                .ok_or_else(|| Error::Plan(format!("{}: unknown source {id}", n.id)))?
                .source();
        }
        depths.insert(n.id, d);
    }
    Ok(depths)
}

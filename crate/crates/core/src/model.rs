//! Domain types shared by every protocol, plus the pure election and metric formulas.

use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};

/// Node identifier. `NodeId::BS` is reserved for the base station; sensors are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const BS: NodeId = NodeId(0);

    #[inline]
    pub fn idx(self) -> usize {
        self.0 as usize
    }

    pub fn is_bs(self) -> bool {
        self == Self::BS
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bs() {
            f.write_str("bs")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }
}

/// Euclidean distance in meters.
pub fn distance(a: Position, b: Position) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Member,
    ClusterHead,
    NextClusterHead,
    OneHopRelay,
    TwoHopMember,
    BaseStation,
    /// Assigned to nodes the base station has isolated.
    Malicious,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Member => "member",
            Role::ClusterHead => "ch",
            Role::NextClusterHead => "next_ch",
            Role::OneHopRelay => "relay",
            Role::TwoHopMember => "two_hop",
            Role::BaseStation => "bs",
            Role::Malicious => "malicious",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: NodeId,
    pub pos: Position,
    pub energy_j: f64,
    pub energy_init_j: f64,
    /// Ring index from the BS sweep; 0 means no beacon was heard.
    pub level: u32,
    pub role: Role,
    pub rounds_since_ch: u32,
    pub member_id: Vec<u8>,
    pub awake: bool,
    /// Under adversary control. Independent of `role` so a compromised node can still hold a protocol role.
    pub compromised: bool,
}

impl NodeState {
    pub fn sensor(id: NodeId, pos: Position, energy_j: f64) -> Self {
        NodeState {
            id,
            pos,
            energy_j,
            energy_init_j: energy_j,
            level: 0,
            role: Role::Member,
            rounds_since_ch: u32::MAX,
            member_id: Vec::new(),
            awake: true,
            compromised: false,
        }
    }

    pub fn base_station(pos: Position) -> Self {
        NodeState {
            id: NodeId::BS,
            pos,
            energy_j: 0.0,
            energy_init_j: 0.0,
            level: 0,
            role: Role::BaseStation,
            rounds_since_ch: u32::MAX,
            member_id: Vec::new(),
            awake: true,
            compromised: false,
        }
    }

    pub fn is_bs(&self) -> bool {
        self.role == Role::BaseStation
    }

    /// The BS is mains powered and never dies.
    pub fn alive(&self) -> bool {
        self.is_bs() || self.energy_j > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelBand {
    pub level: u32,
    pub lower_m: f64,
    pub upper_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdParams {
    pub p: f64,
    pub c: f64,
    pub k: f64,
}

impl Default for ThresholdParams {
    fn default() -> Self {
        ThresholdParams {
            p: 0.05,
            c: 0.5,
            k: 2.0,
        }
    }
}

impl ThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::InvalidParams(format!(
                "P must be in (0,1), got {}",
                self.p
            )));
        }
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "C must be in (0,1], got {}",
                self.c
            )));
        }
        if !(0.0..=3.0).contains(&self.k) {
            return Err(Error::InvalidParams(format!(
                "K must be in [0,3], got {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Length of the Z window and modulus of the round factor: ceil(1/P).
    pub fn period(&self) -> u32 {
        (1.0 / self.p).ceil() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTable {
    pub cluster_id: u32,
    pub active_count: u32,
    pub sleep_count: u32,
    pub ch: Option<(NodeId, f64)>,
    pub next_ch: Option<(NodeId, f64)>,
}

impl ClusterTable {
    pub fn new(cluster_id: u32, active_count: u32) -> Self {
        ClusterTable {
            cluster_id,
            active_count,
            sleep_count: 0,
            ch: None,
            next_ch: None,
        }
    }
}

/// CH election threshold for one node.
///
/// T = P·C·(U − d) / ((1 − P)·f(r)·(U − L)) · (E_cur/E_init)^K with f(r) = max(1, r mod ceil(1/P)).
/// Nodes that headed a cluster within the last ceil(1/P) rounds get 0.
pub fn ch_threshold(
    node: &NodeState,
    round: u32,
    band: &LevelBand,
    params: &ThresholdParams,
    d_bs_m: f64,
) -> Result<f64> {
    params.validate()?;
    if !(band.upper_m > band.lower_m) {
        return Err(Error::InvalidParams(format!(
            "band {} has upper {} <= lower {}",
            band.level, band.upper_m, band.lower_m
        )));
    }
    let period = params.period();
    if node.rounds_since_ch < period || !node.alive() || node.energy_init_j <= 0.0 {
        return Ok(0.0);
    }
    let d = d_bs_m.clamp(band.lower_m, band.upper_m);
    let f_r = (round % period).max(1) as f64;
    let ratio = (node.energy_j / node.energy_init_j).clamp(0.0, 1.0);
    let base = params.p * params.c * (band.upper_m - d)
        / ((1.0 - params.p) * f_r * (band.upper_m - band.lower_m));
    Ok((base * ratio.powf(params.k)).clamp(0.0, 1.0))
}

/// Packet delivery ratio N_r / N_t.
pub fn pdr(n_received: u64, n_transmitted: u64) -> Result<f64> {
    if n_transmitted == 0 {
        return Err(Error::UndefinedRatio);
    }
    Ok(n_received as f64 / n_transmitted as f64)
}

/// 1 mWh = 3.6 J.
pub fn joules_to_mwh(e: f64) -> f64 {
    e / 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Req,
    LevelBeacon,
    Hello,
    ChAdvert,
    JoinConfirm,
    StateMsg,
    Abdicate,
    TdmaSchedule,
    Data,
    Aggregate,
    DetectRequest,
    DetectResponse,
    Blacklist,
}

impl PacketKind {
    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Req => "req",
            PacketKind::LevelBeacon => "level_beacon",
            PacketKind::Hello => "hello",
            PacketKind::ChAdvert => "ch_advert",
            PacketKind::JoinConfirm => "join_confirm",
            PacketKind::StateMsg => "state",
            PacketKind::Abdicate => "abdicate",
            PacketKind::TdmaSchedule => "tdma_schedule",
            PacketKind::Data => "data",
            PacketKind::Aggregate => "aggregate",
            PacketKind::DetectRequest => "detect_request",
            PacketKind::DetectResponse => "detect_response",
            PacketKind::Blacklist => "blacklist",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dest {
    Node(NodeId),
    Broadcast,
}

impl fmt::Display for Dest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dest::Node(n) => n.fmt(f),
            Dest::Broadcast => f.write_str("*"),
        }
    }
}

/// One sensed reading carried inside Data and Aggregate packets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub source: NodeId,
    pub seq: u32,
    pub created_s: f64,
    pub payload_bytes: u32,
}

/// Protocol payload. Shared between all protocols so the engine stays protocol-agnostic.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Body {
    #[default]
    Empty,
    Level(u32),
    Bands(Rc<Vec<LevelBand>>),
    /// Cluster head or route advertisement: claimed hop count and the advertiser's level.
    Advert {
        cluster: u32,
        level: u32,
        hops: u32,
    },
    Join {
        member_id: Vec<u8>,
        via: Option<NodeId>,
        origin: NodeId,
    },
    State {
        ch: NodeId,
        member_id: Vec<u8>,
    },
    Abdicate {
        successor: NodeId,
    },
    Schedule(Rc<Vec<(NodeId, u32)>>),
    Readings(Vec<Reading>),
    Detect(Rc<Vec<NodeId>>),
    Response {
        responder: NodeId,
        next_hop: Option<NodeId>,
        cost: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub src: NodeId,
    pub dst: Dest,
    pub payload_bytes: u32,
    pub created_s: f64,
    pub hops: u32,
    pub body: Body,
}

impl Packet {
    pub fn new(
        kind: PacketKind,
        src: NodeId,
        dst: Dest,
        payload_bytes: u32,
        created_s: f64,
    ) -> Self {
        Packet {
            kind,
            src,
            dst,
            payload_bytes,
            created_s,
            hops: 0,
            body: Body::Empty,
        }
    }

    pub fn with_body(mut self, body: Body) -> Self {
        self.body = body;
        self
    }

    pub fn with_hops(mut self, hops: u32) -> Self {
        self.hops = hops;
        self
    }

    pub fn bits(&self) -> u64 {
        self.payload_bytes as u64 * 8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn node(e: f64, e0: f64) -> NodeState {
        let mut n = NodeState::sensor(NodeId(1), Position::new(0.0, 0.0), e0);
        n.energy_j = e;
        n
    }

    fn band(l: f64, u: f64) -> LevelBand {
        LevelBand {
            level: 1,
            lower_m: l,
            upper_m: u,
        }
    }

    // Straight transcription used as the oracle: no clamping tricks, no shared helpers.
    fn threshold_oracle(
        p: f64,
        c: f64,
        k: f64,
        r: u32,
        u: f64,
        l: f64,
        d: f64,
        e: f64,
        e0: f64,
    ) -> f64 {
        let m = (1.0f64 / p).ceil() as u32;
        let rm = r % m;
        let fr = if rm == 0 { 1.0 } else { rm as f64 };
        let dd = if d < l {
            l
        } else if d > u {
            u
        } else {
            d
        };
        let t = (p * c * (u - dd)) / ((1.0 - p) * fr * (u - l)) * (e / e0).powf(k);
        if t > 1.0 {
            1.0
        } else if t < 0.0 {
            0.0
        } else {
            t
        }
    }

    #[test]
    fn threshold_hand_example() {
        let n = node(0.25, 0.5);
        let p = ThresholdParams {
            p: 0.05,
            c: 0.5,
            k: 2.0,
        };
        let t = ch_threshold(&n, 3, &band(100.0, 200.0), &p, 150.0).unwrap();
        // 0.025 * 50 / (0.95 * 3 * 100) * 0.25
        assert!((t - 0.0010964912280701754).abs() < 1e-15, "{t}");
    }

    #[test]
    fn threshold_zero_cases() {
        let p = ThresholdParams::default();
        assert_eq!(
            ch_threshold(&node(0.0, 0.5), 3, &band(100.0, 200.0), &p, 150.0).unwrap(),
            0.0
        );
        assert_eq!(
            ch_threshold(&node(0.5, 0.5), 3, &band(100.0, 200.0), &p, 200.0).unwrap(),
            0.0
        );
        let mut recent = node(0.5, 0.5);
        recent.rounds_since_ch = 3;
        assert_eq!(
            ch_threshold(&recent, 3, &band(100.0, 200.0), &p, 150.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn threshold_round_multiple_uses_unit_factor() {
        let p = ThresholdParams {
            p: 0.05,
            c: 1.0,
            k: 0.0,
        };
        let a = ch_threshold(&node(0.5, 0.5), 20, &band(0.0, 100.0), &p, 50.0).unwrap();
        let b = ch_threshold(&node(0.5, 0.5), 1, &band(0.0, 100.0), &p, 50.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threshold_rejects_bad_params() {
        let n = node(0.5, 0.5);
        assert!(ch_threshold(
            &n,
            1,
            &band(200.0, 100.0),
            &ThresholdParams::default(),
            150.0
        )
        .is_err());
        let bad = ThresholdParams {
            p: 1.0,
            ..Default::default()
        };
        assert!(ch_threshold(&n, 1, &band(100.0, 200.0), &bad, 150.0).is_err());
    }

    #[test]
    fn pdr_examples() {
        assert_eq!(pdr(141, 200).unwrap(), 0.705);
        assert_eq!(pdr(200, 200).unwrap(), 1.0);
        assert_eq!(pdr(0, 200).unwrap(), 0.0);
        assert!(matches!(pdr(0, 0), Err(Error::UndefinedRatio)));
    }

    #[test]
    fn mwh_examples() {
        assert!((joules_to_mwh(0.5) - 0.138_888_888_888_888_9).abs() < 1e-15);
        assert_eq!(joules_to_mwh(0.0), 0.0);
        assert_eq!(joules_to_mwh(3.6), 1.0);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            distance(Position::new(0.0, 0.0), Position::new(3.0, 4.0)),
            5.0
        );
        let p = Position::new(12.5, 7.0);
        assert_eq!(distance(p, p), 0.0);
        let d = distance(Position::new(50.0, 75.0), Position::new(1000.0, 1000.0));
        assert!((d - (950.0f64 * 950.0 + 925.0 * 925.0).sqrt()).abs() < 1e-12);
        assert!((d - 1325.943).abs() < 1e-3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn threshold_matches_oracle(
            p in 0.001f64..0.999, c in 0.001f64..=1.0, k in 0.0f64..=3.0, r in 1u32..10_000,
            l in 0.0f64..1000.0, w in 0.5f64..1000.0, d in -100.0f64..2500.0,
            e0 in 0.01f64..2.0, frac in 0.0f64..=1.0,
        ) {
            let u = l + w;
            let n = node(e0 * frac, e0);
            let params = ThresholdParams { p, c, k };
            let band = LevelBand { level: 1, lower_m: l, upper_m: u };
            let got = ch_threshold(&n, r, &band, &params, d).unwrap();
            let want = threshold_oracle(p, c, k, r, u, l, d, e0 * frac, e0);
            prop_assert!((0.0..=1.0).contains(&got));
            let rel = if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
            prop_assert!(rel < 1e-12, "got {got} want {want}");
        }
    }

    proptest! {
        #[test]
        fn threshold_monotone(e1 in 0.0f64..0.5, e2 in 0.0f64..0.5, d1 in 100.0f64..200.0, d2 in 100.0f64..200.0) {
            let p = ThresholdParams::default();
            let b = band(100.0, 200.0);
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(ch_threshold(&node(lo, 0.5), 3, &b, &p, 150.0).unwrap()
                <= ch_threshold(&node(hi, 0.5), 3, &b, &p, 150.0).unwrap());
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(ch_threshold(&node(0.4, 0.5), 3, &b, &p, far).unwrap()
                <= ch_threshold(&node(0.4, 0.5), 3, &b, &p, near).unwrap());
        }

        #[test]
        fn pdr_bounded(b in 1u64..100_000, f in 0.0f64..=1.0) {
            let a = (b as f64 * f) as u64;
            let v = pdr(a, b).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(pdr(b, b).unwrap(), 1.0);
        }

        #[test]
        fn mwh_linear(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            let lhs = joules_to_mwh(a + b);
            let rhs = joules_to_mwh(a) + joules_to_mwh(b);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1.0));
        }

        #[test]
        fn distance_symmetric(ax in 0.0f64..1000.0, ay in 0.0f64..1000.0, bx in 0.0f64..1000.0, by in 0.0f64..1000.0) {
            let a = Position::new(ax, ay);
            let b = Position::new(bx, by);
            prop_assert_eq!(distance(a, b), distance(b, a));
            prop_assert!(distance(a, b) >= 0.0);
        }
    }
}

//! Agent communication language.
//!
//! Every interaction between agents is one of a handful of immutable
//! envelope values: routed user requests, delayed rewards, capability
//! introductions, output suggestions, actuation orders and window flushes.
//! Envelopes carry the originator, the sender, the issuing user, the
//! request id and a timestamp so that rewards arriving much later can be
//! matched back to the decisions that produced them.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::clock::Clock;
use crate::policy::ActionRef;

/// Default hop budget for freshly issued requests.
pub const DEFAULT_TTL: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MessageError {
    #[error("request has no content segments")]
    EmptyRequest,
    #[error("request ttl must be at least 1")]
    ZeroTtl,
    #[error("request ttl exhausted, cannot derive a child")]
    TtlExhausted,
    #[error("malformed envelope: {0}")]
    Malformed(String),
}

/// Unique agent address issued by the name server.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(String);

impl Address {
    pub fn new(value: impl Into<String>) -> Self {
        Address(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Readable label part of a name-server address (`shifting#5` -> `shifting`).
    pub fn label(&self) -> &str {
        self.0.rsplit_once('#').map_or(&self.0, |(label, _)| label)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(value: impl Into<String>) -> Self {
        UserId(value.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Monotone request id source shared by the input agents of one service.
#[derive(Debug, Clone)]
pub struct RequestIdAllocator {
    next: u64,
}

impl Default for RequestIdAllocator {
    fn default() -> Self {
        RequestIdAllocator { next: 1 }
    }
}

impl RequestIdAllocator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self) -> RequestId {
        let id = RequestId(self.next);
        self.next += 1;
        id
    }
}

/// Signed reward quantity stored as integer nano-units.
///
/// Splitting a reward between an agent and its requesters must conserve the
/// total exactly across arbitrarily deep propagation trees, which binary
/// floating point cannot guarantee. All reward arithmetic therefore happens
/// on fixed-point integers and is converted to `f64` only at the learning
/// rule and on the wire.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RewardValue(i64);

impl RewardValue {
    pub const SCALE: i64 = 1_000_000_000;
    pub const ZERO: RewardValue = RewardValue(0);

    pub fn from_nanos(nanos: i64) -> Self {
        RewardValue(nanos)
    }

    pub fn nanos(self) -> i64 {
        self.0
    }

    /// Rounds to the nearest nano-unit. Non-finite input maps to zero.
    pub fn from_f64(value: f64) -> Self {
        if !value.is_finite() {
            return RewardValue::ZERO;
        }
        RewardValue((value * Self::SCALE as f64).round() as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / Self::SCALE as f64
    }

    /// `fraction × self`, rounded to the nearest nano-unit.
    pub fn scale(self, fraction: f64) -> Self {
        RewardValue((self.0 as f64 * fraction).round() as i64)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add for RewardValue {
    type Output = RewardValue;
    fn add(self, rhs: RewardValue) -> RewardValue {
        RewardValue(self.0 + rhs.0)
    }
}

impl Sub for RewardValue {
    type Output = RewardValue;
    fn sub(self, rhs: RewardValue) -> RewardValue {
        RewardValue(self.0 - rhs.0)
    }
}

impl Neg for RewardValue {
    type Output = RewardValue;
    fn neg(self) -> RewardValue {
        RewardValue(-self.0)
    }
}

impl std::iter::Sum for RewardValue {
    fn sum<I: Iterator<Item = RewardValue>>(iter: I) -> RewardValue {
        iter.fold(RewardValue::ZERO, |acc, v| acc + v)
    }
}

impl fmt::Display for RewardValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

impl Serialize for RewardValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for RewardValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("reward value must be finite"));
        }
        Ok(RewardValue::from_f64(v))
    }
}

/// Symbolized pointer gesture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointerKind {
    Click,
    Drag,
    OnRightBorder,
    OnLeftBorder,
    OnTopBorder,
    OnBottomBorder,
    Arrow,
}

impl PointerKind {
    pub const ALL: [PointerKind; 7] = [
        PointerKind::Click,
        PointerKind::Drag,
        PointerKind::OnRightBorder,
        PointerKind::OnLeftBorder,
        PointerKind::OnTopBorder,
        PointerKind::OnBottomBorder,
        PointerKind::Arrow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PointerKind::Click => "click",
            PointerKind::Drag => "drag",
            PointerKind::OnRightBorder => "on-right-border",
            PointerKind::OnLeftBorder => "on-left-border",
            PointerKind::OnTopBorder => "on-top-border",
            PointerKind::OnBottomBorder => "on-bottom-border",
            PointerKind::Arrow => "arrow",
        }
    }

    /// Token the interpreter sees for this gesture, e.g. `mouse-on-right-border`.
    pub fn token(self) -> String {
        format!("mouse-{}", self.name())
    }

    pub fn parse(name: &str) -> Option<PointerKind> {
        PointerKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pointer {
    pub kind: PointerKind,
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Text(Vec<String>),
    Pointer(Pointer),
}

impl Segment {
    pub fn pointer(kind: PointerKind, x: f64, y: f64) -> Segment {
        Segment::Pointer(Pointer { kind, x, y, target: None })
    }

    pub fn is_pointer(&self) -> bool {
        matches!(self, Segment::Pointer(_))
    }
}

/// All interpreter-visible tokens of a request, in order, with repeats.
pub fn segment_tokens(segments: &[Segment]) -> Vec<String> {
    let mut out = Vec::new();
    for seg in segments {
        match seg {
            Segment::Text(tokens) => out.extend(tokens.iter().cloned()),
            Segment::Pointer(p) => out.push(p.kind.token()),
        }
    }
    out
}

pub fn token_set(segments: &[Segment]) -> BTreeSet<String> {
    segment_tokens(segments).into_iter().collect()
}

/// Lowercases, strips punctuation and splits on whitespace.
pub fn tokenize_text(raw: &str) -> Segment {
    let tokens = raw
        .split_whitespace()
        .map(|word| word.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|t| !t.is_empty())
        .collect();
    Segment::Text(tokens)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestEnvelope {
    pub originator: Address,
    pub sender: Address,
    pub user: UserId,
    #[serde(rename = "id")]
    pub request_id: RequestId,
    #[serde(rename = "ts")]
    pub timestamp: u64,
    pub ttl: u32,
    pub segments: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(rename = "path")]
    pub hop_path: Vec<Address>,
}

impl RequestEnvelope {
    pub fn tokens(&self) -> Vec<String> {
        segment_tokens(&self.segments)
    }

    pub fn has_text(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, Segment::Text(_)))
    }

    pub fn has_pointer(&self) -> bool {
        self.segments.iter().any(Segment::is_pointer)
    }
}

/// Issues a fresh request from an input agent.
pub fn new_request(
    originator: &Address,
    user: &UserId,
    segments: Vec<Segment>,
    clock: &dyn Clock,
    ttl: u32,
    ids: &mut RequestIdAllocator,
) -> Result<RequestEnvelope, MessageError> {
    let has_content = segments.iter().any(|s| match s {
        Segment::Text(t) => !t.is_empty(),
        Segment::Pointer(_) => true,
    });
    if !has_content {
        return Err(MessageError::EmptyRequest);
    }
    if ttl < 1 {
        return Err(MessageError::ZeroTtl);
    }
    let segments = segments.into_iter().filter(|s| !matches!(s, Segment::Text(t) if t.is_empty())).collect();
    Ok(RequestEnvelope {
        originator: originator.clone(),
        sender: originator.clone(),
        user: user.clone(),
        request_id: ids.next_id(),
        timestamp: clock.now_ms(),
        ttl,
        segments,
        confidence: None,
        hop_path: vec![originator.clone()],
    })
}

/// Child request forwarded by `new_sender`; keeps the root id, user and originator.
pub fn derive_child(
    parent: &RequestEnvelope,
    new_sender: &Address,
    segments: Vec<Segment>,
) -> Result<RequestEnvelope, MessageError> {
    if parent.ttl == 0 {
        return Err(MessageError::TtlExhausted);
    }
    let mut hop_path = parent.hop_path.clone();
    hop_path.push(new_sender.clone());
    Ok(RequestEnvelope {
        originator: parent.originator.clone(),
        sender: new_sender.clone(),
        user: parent.user.clone(),
        request_id: parent.request_id,
        timestamp: parent.timestamp,
        ttl: parent.ttl - 1,
        segments,
        confidence: parent.confidence,
        hop_path,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardEnvelope {
    #[serde(rename = "id")]
    pub request_id: RequestId,
    pub user: UserId,
    pub value: RewardValue,
    pub source: Address,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntroductionEnvelope {
    pub address: Address,
    #[serde(rename = "capabilities")]
    pub capability_tokens: BTreeSet<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionEnvelope {
    #[serde(rename = "id")]
    pub request_id: RequestId,
    pub user: UserId,
    pub action: ActionRef,
    pub confidence: f64,
    pub source: Address,
}

/// Order from an output agent asking `action`'s proposer to carry it out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuateEnvelope {
    #[serde(rename = "id")]
    pub request_id: RequestId,
    pub user: UserId,
    pub action: ActionRef,
    pub source: Address,
}

/// Closes the current collection window at the receiving agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlushEnvelope {
    #[serde(rename = "ts")]
    pub timestamp: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Envelope {
    Request(RequestEnvelope),
    Reward(RewardEnvelope),
    #[serde(rename = "intro")]
    Introduction(IntroductionEnvelope),
    Suggestion(SuggestionEnvelope),
    Actuate(ActuateEnvelope),
    Flush(FlushEnvelope),
}

impl Envelope {
    pub fn kind(&self) -> &'static str {
        match self {
            Envelope::Request(_) => "request",
            Envelope::Reward(_) => "reward",
            Envelope::Introduction(_) => "intro",
            Envelope::Suggestion(_) => "suggestion",
            Envelope::Actuate(_) => "actuate",
            Envelope::Flush(_) => "flush",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelopes always serialize")
    }

    /// Parses and validates one envelope.
    pub fn from_json(raw: &str) -> Result<Envelope, MessageError> {
        let env: Envelope = serde_json::from_str(raw).map_err(|e| MessageError::Malformed(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<(), MessageError> {
        let bad = |m: &str| Err(MessageError::Malformed(m.to_string()));
        let unit = |c: f64| (0.0..=1.0).contains(&c);
        match self {
            Envelope::Request(r) => {
                if r.originator.as_str().is_empty() || r.sender.as_str().is_empty() {
                    return bad("empty address");
                }
                if r.user.as_str().is_empty() {
                    return bad("empty user");
                }
                if r.segments.is_empty() {
                    return bad("no segments");
                }
                for seg in &r.segments {
                    if let Segment::Text(tokens) = seg {
                        if tokens.is_empty() || tokens.iter().any(|t| t.is_empty()) {
                            return bad("empty text segment");
                        }
                    }
                }
                if r.confidence.is_some_and(|c| !unit(c)) {
                    return bad("confidence outside [0,1]");
                }
                if r.hop_path.is_empty() {
                    return bad("empty hop path");
                }
            }
            Envelope::Reward(r) => {
                if r.user.as_str().is_empty() || r.source.as_str().is_empty() {
                    return bad("empty user or source");
                }
            }
            Envelope::Introduction(i) => {
                if i.capability_tokens.is_empty() {
                    return bad("introduction without capabilities");
                }
            }
            Envelope::Suggestion(s) => {
                if !unit(s.confidence) {
                    return bad("confidence outside [0,1]");
                }
            }
            Envelope::Actuate(_) | Envelope::Flush(_) => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use proptest::prelude::*;

    fn text(raw: &str) -> Segment {
        tokenize_text(raw)
    }

    #[test]
    fn tokenizes_request_string() {
        assert_eq!(
            text("Shift the map to the right"),
            Segment::Text(["shift", "the", "map", "to", "the", "right"].map(String::from).to_vec())
        );
        assert_eq!(text(""), Segment::Text(vec![]));
        assert_eq!(
            text("Tell me about THIS hotel!"),
            Segment::Text(["tell", "me", "about", "this", "hotel"].map(String::from).to_vec())
        );
    }

    #[test]
    fn new_request_shape_and_errors() {
        let clock = ManualClock::new(1_000);
        let mut ids = RequestIdAllocator::new();
        let input = Address::new("nl-input#1");
        let user = UserId::new("u1");
        let req = new_request(&input, &user, vec![text("shift the map to the right")], &clock, DEFAULT_TTL, &mut ids)
            .unwrap();
        assert_eq!(req.tokens().len(), 6);
        assert_eq!(req.hop_path, vec![input.clone()]);
        assert_eq!(req.sender, req.originator);
        assert_eq!(req.timestamp, 1_000);

        assert_eq!(new_request(&input, &user, vec![], &clock, 8, &mut ids), Err(MessageError::EmptyRequest));
        assert_eq!(new_request(&input, &user, vec![text("")], &clock, 8, &mut ids), Err(MessageError::EmptyRequest));
        assert_eq!(new_request(&input, &user, vec![text("x")], &clock, 0, &mut ids), Err(MessageError::ZeroTtl));

        let a = new_request(&input, &user, vec![text("a")], &clock, 8, &mut ids).unwrap();
        let b = new_request(&input, &user, vec![text("b")], &clock, 8, &mut ids).unwrap();
        assert!(b.request_id > a.request_id);
    }

    #[test]
    fn derive_child_decrements_and_exhausts() {
        let clock = ManualClock::new(0);
        let mut ids = RequestIdAllocator::new();
        let origin = Address::new("in#1");
        let mut req = new_request(&origin, &UserId::new("u"), vec![text("go")], &clock, 8, &mut ids).unwrap();
        let child = derive_child(&req, &Address::new("a#2"), req.segments.clone()).unwrap();
        assert_eq!(child.ttl, 7);
        assert_eq!(child.request_id, req.request_id);
        assert_eq!(child.originator, origin);

        for _ in 0..8 {
            req = derive_child(&req, &Address::new("hop#9"), req.segments.clone()).unwrap();
        }
        assert_eq!(req.ttl, 0);
        assert_eq!(derive_child(&req, &Address::new("hop#9"), req.segments.clone()), Err(MessageError::TtlExhausted));
    }

    #[test]
    fn wire_format_matches_documented_shape() {
        let env = Envelope::Reward(RewardEnvelope {
            request_id: RequestId(5),
            user: UserId::new("u1"),
            value: RewardValue::from_f64(-1.0),
            source: Address::new("feedback#14"),
        });
        assert_eq!(env.to_json(), r#"{"type":"reward","id":5,"user":"u1","value":-1.0,"source":"feedback#14"}"#);
        let intro = Envelope::from_json(r#"{"type":"intro","address":"a#1","capabilities":["hotel"]}"#).unwrap();
        assert!(matches!(intro, Envelope::Introduction(ref i) if i.capability_tokens.len() == 1));
        let req = Envelope::from_json(
            r#"{"type":"request","originator":"a","sender":"a","user":"u","id":1,"ts":0,"ttl":8,
                "segments":[{"text":["shift"]},{"pointer":{"kind":"on-right-border","x":1.0,"y":2.0}}],
                "path":["a"]}"#,
        )
        .unwrap();
        match req {
            Envelope::Request(r) => assert_eq!(r.tokens(), vec!["shift", "mouse-on-right-border"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_invalid_envelopes() {
        assert!(Envelope::from_json(r#"{"type":"intro","address":"a","capabilities":[]}"#).is_err());
        assert!(Envelope::from_json(
            r#"{"type":"request","originator":"a","sender":"a","user":"u","id":1,"ts":0,"ttl":8,
                "segments":[{"text":["x"]}],"confidence":1.5,"path":["a"]}"#
        )
        .is_err());
        assert!(Envelope::from_json("{").is_err());
    }

    fn arb_address() -> impl Strategy<Value = Address> {
        "[a-z]{1,6}#[0-9]{1,3}".prop_map(Address::new)
    }

    fn arb_segment() -> impl Strategy<Value = Segment> {
        prop_oneof![
            prop::collection::vec("[a-z]{1,5}", 1..5).prop_map(Segment::Text),
            (0usize..7, -500i32..500, -500i32..500, prop::option::of("[a-z][0-9]")).prop_map(|(k, x, y, target)| {
                Segment::Pointer(Pointer { kind: PointerKind::ALL[k], x: x as f64 * 0.5, y: y as f64 * 0.25, target })
            }),
        ]
    }

    fn arb_envelope() -> impl Strategy<Value = Envelope> {
        let request = (
            arb_address(),
            "[a-z]{1,4}",
            0u64..1000,
            0u64..1u64 << 40,
            0u32..10,
            prop::collection::vec(arb_segment(), 1..4),
            prop::option::of(0u32..=100),
            prop::collection::vec(arb_address(), 1..4),
        )
            .prop_map(|(a, u, id, ts, ttl, segments, conf, path)| {
                Envelope::Request(RequestEnvelope {
                    originator: a.clone(),
                    sender: a,
                    user: UserId::new(u),
                    request_id: RequestId(id),
                    timestamp: ts,
                    ttl,
                    segments,
                    confidence: conf.map(|c| c as f64 / 100.0),
                    hop_path: path,
                })
            });
        let reward =
            (0u64..1000, "[a-z]{1,4}", -5_000_000_000i64..5_000_000_000, arb_address()).prop_map(|(id, u, v, s)| {
                Envelope::Reward(RewardEnvelope {
                    request_id: RequestId(id),
                    user: UserId::new(u),
                    value: RewardValue::from_nanos(v),
                    source: s,
                })
            });
        let intro = (arb_address(), prop::collection::btree_set("[a-z-]{1,8}", 1..5)).prop_map(
            |(address, capability_tokens)| Envelope::Introduction(IntroductionEnvelope { address, capability_tokens }),
        );
        prop_oneof![request, reward, intro]
    }

    proptest! {
        #[test]
        fn envelope_json_round_trip(env in arb_envelope()) {
            let parsed = Envelope::from_json(&env.to_json()).unwrap();
            prop_assert_eq!(parsed, env);
        }

        #[test]
        fn ttl_plus_path_is_conserved(hops in 0u32..8, initial in 1u32..12) {
            let clock = ManualClock::new(0);
            let mut ids = RequestIdAllocator::new();
            let mut req = new_request(&Address::new("o#1"), &UserId::new("u"),
                vec![tokenize_text("x")], &clock, initial, &mut ids).unwrap();
            for h in 0..hops.min(initial) {
                req = derive_child(&req, &Address::new(format!("h#{h}")), req.segments.clone()).unwrap();
                prop_assert_eq!(req.ttl as usize + req.hop_path.len() - 1, initial as usize);
            }
        }
    }
}

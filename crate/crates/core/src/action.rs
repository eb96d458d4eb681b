//! Canonical GUI action space.
//!
//! Actions travel as one tool-call document each:
//!
//! ```text
//! {"name": "click",         "arguments": {"coordinate": [x, y]}}
//! {"name": "swipe",         "arguments": {"coordinate": [x, y], "coordinate2": [x2, y2]}}
//! {"name": "type",          "arguments": {"text": "..."}}
//! {"name": "system_button", "arguments": {"button": "Back" | "Home"}}
//! {"name": "terminate",     "arguments": {"status": "success" | "failure"}}
//! ```
//!
//! Coordinates live in a normalized `[0, 999] x [0, 999]` screen space,
//! measured from the left and top edges.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Largest coordinate in the normalized screen space.
pub const COORD_MAX: u32 = 999;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActionError {
    #[error("malformed action document: {0}")]
    MalformedDocument(String),
    #[error("unknown action type `{0}`")]
    UnknownActionType(String),
    #[error("action `{action}` is missing argument `{field}`")]
    MissingArgument {
        action: ActionKind,
        field: &'static str,
    },
    #[error("argument `{field}` out of range: {value}")]
    OutOfRangeArgument { field: &'static str, value: f64 },
    #[error("argument `{field}` is invalid: {reason}")]
    InvalidArgument { field: &'static str, reason: String },
    #[error("action `{0}` carries no coordinates")]
    NoCoordinates(ActionKind),
    #[error("screen size must be at least 1x1, got {width}x{height}")]
    InvalidScreenSize { width: u32, height: u32 },
}

/// A point in the normalized 0..=999 screen space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    /// Builds a point, clamping both coordinates into `[0, 999]`.
    pub fn clamped(x: u32, y: u32) -> Self {
        Point {
            x: x.min(COORD_MAX),
            y: y.min(COORD_MAX),
        }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Button {
    Back,
    Home,
}

impl Button {
    pub fn as_str(&self) -> &'static str {
        match self {
            Button::Back => "Back",
            Button::Home => "Home",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Success,
    Failure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Failure => "failure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionKind {
    Click,
    Swipe,
    Type,
    SystemButton,
    Terminate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 5] = [
        ActionKind::Click,
        ActionKind::Swipe,
        ActionKind::Type,
        ActionKind::SystemButton,
        ActionKind::Terminate,
    ];

    /// Wire name used in the `name` field of a tool-call document.
    pub fn wire_name(&self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Swipe => "swipe",
            ActionKind::Type => "type",
            ActionKind::SystemButton => "system_button",
            ActionKind::Terminate => "terminate",
        }
    }

    fn from_wire(name: &str) -> Option<Self> {
        let normalized: String = name
            .trim()
            .chars()
            .map(|c| match c {
                '-' | ' ' => '_',
                c => c.to_ascii_lowercase(),
            })
            .collect();
        ActionKind::ALL.into_iter().find(|kind| {
            let wire = kind.wire_name();
            normalized == wire || normalized == wire.replace('_', "")
        })
    }

    pub fn category(&self) -> ActionCategory {
        match self {
            ActionKind::Click => ActionCategory::Coordinate,
            ActionKind::Swipe | ActionKind::Type => ActionCategory::TextOrGesture,
            ActionKind::SystemButton | ActionKind::Terminate => ActionCategory::DiscreteEnumerated,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

/// Reward-landscape grouping of action kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionCategory {
    Coordinate,
    TextOrGesture,
    DiscreteEnumerated,
}

/// A canonical GUI action. Each variant carries exactly the arguments its
/// kind requires.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Action {
    Click { at: Point },
    Swipe { from: Point, to: Point },
    Type { text: String },
    SystemButton { button: Button },
    Terminate { status: Status },
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::Swipe { .. } => ActionKind::Swipe,
            Action::Type { .. } => ActionKind::Type,
            Action::SystemButton { .. } => ActionKind::SystemButton,
            Action::Terminate { .. } => ActionKind::Terminate,
        }
    }

    pub fn category(&self) -> ActionCategory {
        self.kind().category()
    }

    /// Canonical tool-call document for this action.
    pub fn to_document(&self) -> Value {
        let arguments = match self {
            Action::Click { at } => json!({ "coordinate": [at.x, at.y] }),
            Action::Swipe { from, to } => json!({
                "coordinate": [from.x, from.y],
                "coordinate2": [to.x, to.y],
            }),
            Action::Type { text } => json!({ "text": text }),
            Action::SystemButton { button } => json!({ "button": button.as_str() }),
            Action::Terminate { status } => json!({ "status": status.as_str() }),
        };
        json!({ "name": self.kind().wire_name(), "arguments": arguments })
    }

    pub fn to_json(&self) -> String {
        self.to_document().to_string()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_document().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        parse_value(&value, ParseOptions::default()).map_err(serde::de::Error::custom)
    }
}

pub fn category_of(action: &Action) -> ActionCategory {
    action.category()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject coordinates outside `[0, 999]` instead of clamping them.
    pub strict_range: bool,
}

/// Parses a tool-call document with lenient coordinate handling.
pub fn parse_action(raw: &str) -> Result<Action, ActionError> {
    parse_action_with(raw, ParseOptions::default())
}

pub fn parse_action_with(raw: &str, opts: ParseOptions) -> Result<Action, ActionError> {
    let value: Value = serde_json::from_str(raw.trim())
        .map_err(|e| ActionError::MalformedDocument(e.to_string()))?;
    parse_value(&value, opts)
}

/// Parses an already-decoded JSON document.
pub fn parse_value(value: &Value, opts: ParseOptions) -> Result<Action, ActionError> {
    let obj = value
        .as_object()
        .ok_or_else(|| ActionError::MalformedDocument("expected a JSON object".into()))?;
    let name = obj
        .get("name")
        .ok_or_else(|| ActionError::MalformedDocument("missing `name`".into()))?
        .as_str()
        .ok_or_else(|| ActionError::MalformedDocument("`name` must be a string".into()))?;
    let kind =
        ActionKind::from_wire(name).ok_or_else(|| ActionError::UnknownActionType(name.into()))?;

    // Some emitters nest the arguments object as an encoded JSON string.
    let decoded;
    let args: &Map<String, Value> = match obj.get("arguments") {
        None | Some(Value::Null) => {
            decoded = Map::new();
            &decoded
        }
        Some(Value::Object(map)) => map,
        Some(Value::String(s)) => {
            decoded = match serde_json::from_str::<Value>(s) {
                Ok(Value::Object(map)) => map,
                _ => {
                    return Err(ActionError::MalformedDocument(
                        "`arguments` string is not a JSON object".into(),
                    ))
                }
            };
            &decoded
        }
        Some(_) => {
            return Err(ActionError::MalformedDocument(
                "`arguments` must be an object".into(),
            ))
        }
    };

    let action = match kind {
        ActionKind::Click => Action::Click {
            at: coordinate(args, kind, "coordinate", opts)?,
        },
        ActionKind::Swipe => Action::Swipe {
            from: coordinate(args, kind, "coordinate", opts)?,
            to: coordinate(args, kind, "coordinate2", opts)?,
        },
        ActionKind::Type => {
            let text = required(args, kind, "text")?.as_str().ok_or_else(|| {
                ActionError::InvalidArgument {
                    field: "text",
                    reason: "expected a string".into(),
                }
            })?;
            if text.is_empty() {
                return Err(ActionError::MissingArgument {
                    action: kind,
                    field: "text",
                });
            }
            Action::Type {
                text: text.to_owned(),
            }
        }
        ActionKind::SystemButton => {
            let button = match enum_arg(args, kind, "button")?.as_str() {
                "back" => Button::Back,
                "home" => Button::Home,
                other => {
                    return Err(ActionError::InvalidArgument {
                        field: "button",
                        reason: format!("unknown button `{other}`"),
                    })
                }
            };
            Action::SystemButton { button }
        }
        ActionKind::Terminate => {
            let status = match enum_arg(args, kind, "status")?.as_str() {
                "success" => Status::Success,
                "failure" => Status::Failure,
                other => {
                    return Err(ActionError::InvalidArgument {
                        field: "status",
                        reason: format!("unknown status `{other}`"),
                    })
                }
            };
            Action::Terminate { status }
        }
    };
    Ok(action)
}

fn required<'a>(
    args: &'a Map<String, Value>,
    kind: ActionKind,
    field: &'static str,
) -> Result<&'a Value, ActionError> {
    match args.get(field) {
        None | Some(Value::Null) => Err(ActionError::MissingArgument {
            action: kind,
            field,
        }),
        Some(v) => Ok(v),
    }
}

fn enum_arg(
    args: &Map<String, Value>,
    kind: ActionKind,
    field: &'static str,
) -> Result<String, ActionError> {
    let raw =
        required(args, kind, field)?
            .as_str()
            .ok_or_else(|| ActionError::InvalidArgument {
                field,
                reason: "expected a string".into(),
            })?;
    let value = raw.trim().to_ascii_lowercase();
    if value.is_empty() {
        return Err(ActionError::MissingArgument {
            action: kind,
            field,
        });
    }
    Ok(value)
}

fn coordinate(
    args: &Map<String, Value>,
    kind: ActionKind,
    field: &'static str,
    opts: ParseOptions,
) -> Result<Point, ActionError> {
    let pair = required(args, kind, field)?
        .as_array()
        .filter(|a| a.len() == 2)
        .ok_or_else(|| ActionError::InvalidArgument {
            field,
            reason: "expected a two-element array".into(),
        })?;
    let mut out = [0u32; 2];
    for (slot, v) in out.iter_mut().zip(pair) {
        let raw = v.as_f64().ok_or_else(|| ActionError::InvalidArgument {
            field,
            reason: "coordinates must be numbers".into(),
        })?;
        let rounded = raw.round();
        if opts.strict_range && !(0.0..=COORD_MAX as f64).contains(&rounded) {
            return Err(ActionError::OutOfRangeArgument { field, value: raw });
        }
        *slot = rounded.clamp(0.0, COORD_MAX as f64) as u32;
    }
    Ok(Point {
        x: out[0],
        y: out[1],
    })
}

/// Device resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScreenSize {
    width: u32,
    height: u32,
}

impl ScreenSize {
    pub fn new(width: u32, height: u32) -> Result<Self, ActionError> {
        if width == 0 || height == 0 {
            return Err(ActionError::InvalidScreenSize { width, height });
        }
        Ok(ScreenSize { width, height })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

/// A coordinate-bearing action expressed in device pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelAction {
    Click { at: PixelPoint },
    Swipe { from: PixelPoint, to: PixelPoint },
}

fn rescale_axis(c: u32, dimension: u32) -> u32 {
    let scaled = (c as f64 / COORD_MAX as f64 * dimension as f64).round();
    // round(999/999 * W) = W is one past the last pixel index.
    (scaled as u32).min(dimension - 1)
}

fn rescale_point(p: Point, screen: ScreenSize) -> PixelPoint {
    PixelPoint {
        x: rescale_axis(p.x, screen.width),
        y: rescale_axis(p.y, screen.height),
    }
}

/// Maps normalized coordinates onto a device with the given resolution.
pub fn rescale_to_pixels(action: &Action, screen: ScreenSize) -> Result<PixelAction, ActionError> {
    match action {
        Action::Click { at } => Ok(PixelAction::Click {
            at: rescale_point(*at, screen),
        }),
        Action::Swipe { from, to } => Ok(PixelAction::Swipe {
            from: rescale_point(*from, screen),
            to: rescale_point(*to, screen),
        }),
        other => Err(ActionError::NoCoordinates(other.kind())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn click(x: u32, y: u32) -> Action {
        Action::Click { at: Point { x, y } }
    }

    #[test]
    fn parses_click() {
        let a = parse_action(r#"{"name":"click","arguments":{"coordinate":[500,500]}}"#).unwrap();
        assert_eq!(a, click(500, 500));
    }

    #[test]
    fn parses_terminate() {
        let a = parse_action(r#"{"name":"terminate","arguments":{"status":"success"}}"#).unwrap();
        assert_eq!(
            a,
            Action::Terminate {
                status: Status::Success
            }
        );
    }

    #[test]
    fn missing_coordinate_is_reported() {
        let err = parse_action(r#"{"name":"click","arguments":{}}"#).unwrap_err();
        assert_eq!(
            err,
            ActionError::MissingArgument {
                action: ActionKind::Click,
                field: "coordinate"
            }
        );
    }

    #[test]
    fn error_kinds_are_distinct() {
        assert!(matches!(
            parse_action("{not json"),
            Err(ActionError::MalformedDocument(_))
        ));
        assert!(matches!(
            parse_action(r#"{"name":"long_press","arguments":{}}"#),
            Err(ActionError::UnknownActionType(_))
        ));
        assert!(matches!(
            parse_action_with(
                r#"{"name":"click","arguments":{"coordinate":[1200,5]}}"#,
                ParseOptions { strict_range: true }
            ),
            Err(ActionError::OutOfRangeArgument { .. })
        ));
        assert!(matches!(
            parse_action(r#"{"name":"system_button","arguments":{"button":"Menu"}}"#),
            Err(ActionError::InvalidArgument { .. })
        ));
    }

    #[test]
    fn lenient_mode_clamps_coordinates() {
        let a = parse_action(r#"{"name":"click","arguments":{"coordinate":[1200,-3]}}"#).unwrap();
        assert_eq!(a, click(999, 0));
    }

    #[test]
    fn fractional_coordinates_round() {
        let a = parse_action(r#"{"name":"click","arguments":{"coordinate":[10.4,10.6]}}"#).unwrap();
        assert_eq!(a, click(10, 11));
    }

    #[test]
    fn names_are_normalized() {
        let a = parse_action(r#"{"name":"System_Button","arguments":{"button":"back"}}"#).unwrap();
        assert_eq!(
            a,
            Action::SystemButton {
                button: Button::Back
            }
        );
        let a = parse_action(r#"{"name":"systembutton","arguments":{"button":"HOME"}}"#).unwrap();
        assert_eq!(
            a,
            Action::SystemButton {
                button: Button::Home
            }
        );
    }

    #[test]
    fn string_encoded_arguments_are_accepted() {
        let a = parse_action(r#"{"name":"type","arguments":"{\"text\":\" Hi \"}"}"#).unwrap();
        assert_eq!(
            a,
            Action::Type {
                text: " Hi ".into()
            }
        );
    }

    #[test]
    fn empty_text_is_missing() {
        assert!(matches!(
            parse_action(r#"{"name":"type","arguments":{"text":""}}"#),
            Err(ActionError::MissingArgument { field: "text", .. })
        ));
    }

    #[test]
    fn swipe_needs_both_points() {
        let err = parse_action(r#"{"name":"swipe","arguments":{"coordinate":[1,2]}}"#).unwrap_err();
        assert_eq!(
            err,
            ActionError::MissingArgument {
                action: ActionKind::Swipe,
                field: "coordinate2"
            }
        );
    }

    #[test]
    fn categories() {
        assert_eq!(category_of(&click(1, 1)), ActionCategory::Coordinate);
        let swipe = Action::Swipe {
            from: Point { x: 1, y: 1 },
            to: Point { x: 1, y: 500 },
        };
        assert_eq!(category_of(&swipe), ActionCategory::TextOrGesture);
        let typed = Action::Type { text: "a".into() };
        assert_eq!(category_of(&typed), ActionCategory::TextOrGesture);
        let term = Action::Terminate {
            status: Status::Failure,
        };
        assert_eq!(category_of(&term), ActionCategory::DiscreteEnumerated);
        let button = Action::SystemButton {
            button: Button::Home,
        };
        assert_eq!(category_of(&button), ActionCategory::DiscreteEnumerated);
    }

    #[test]
    fn rescale_examples() {
        let phone = ScreenSize::new(1080, 2400).unwrap();
        assert_eq!(
            rescale_to_pixels(&click(500, 500), phone).unwrap(),
            PixelAction::Click {
                at: PixelPoint { x: 541, y: 1201 }
            }
        );
        assert_eq!(
            rescale_to_pixels(&click(0, 0), phone).unwrap(),
            PixelAction::Click {
                at: PixelPoint { x: 0, y: 0 }
            }
        );
        assert_eq!(
            rescale_to_pixels(&click(999, 999), phone).unwrap(),
            PixelAction::Click {
                at: PixelPoint { x: 1079, y: 2399 }
            }
        );
        let tiny = ScreenSize::new(1, 1).unwrap();
        assert_eq!(
            rescale_to_pixels(&click(999, 0), tiny).unwrap(),
            PixelAction::Click {
                at: PixelPoint { x: 0, y: 0 }
            }
        );
    }

    #[test]
    fn rescale_rejects_non_coordinate_actions() {
        let phone = ScreenSize::new(1080, 2400).unwrap();
        let err = rescale_to_pixels(&Action::Type { text: "x".into() }, phone).unwrap_err();
        assert_eq!(err, ActionError::NoCoordinates(ActionKind::Type));
        assert!(ScreenSize::new(0, 10).is_err());
    }

    fn arb_point() -> impl Strategy<Value = Point> {
        (0..=COORD_MAX, 0..=COORD_MAX).prop_map(|(x, y)| Point { x, y })
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop_oneof![
            arb_point().prop_map(|at| Action::Click { at }),
            (arb_point(), arb_point()).prop_map(|(from, to)| Action::Swipe { from, to }),
            "\\PC{1,24}".prop_map(|text| Action::Type { text }),
            prop_oneof![Just(Button::Back), Just(Button::Home)]
                .prop_map(|button| Action::SystemButton { button }),
            prop_oneof![Just(Status::Success), Just(Status::Failure)]
                .prop_map(|status| Action::Terminate { status }),
        ]
    }

    proptest! {
        #[test]
        fn canonical_documents_round_trip(a in arb_action()) {
            let parsed = parse_action(&a.to_json()).unwrap();
            prop_assert_eq!(parsed, a);
        }

        #[test]
        fn parse_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let raw = String::from_utf8_lossy(&bytes);
            let _ = parse_action(&raw);
        }

        #[test]
        fn parse_never_panics_on_near_documents(
            name in "(click|swipe|type|system_button|terminate|tap)",
            args in "\\PC{0,40}",
        ) {
            let raw = format!(r#"{{"name":"{name}","arguments":{{{args}}}}}"#);
            let _ = parse_action(&raw);
        }

        #[test]
        fn rescale_is_monotone_and_bounded(
            a in 0..=COORD_MAX, b in 0..=COORD_MAX,
            w in 1u32..5000, h in 1u32..5000,
        ) {
            let screen = ScreenSize::new(w, h).unwrap();
            let (lo, hi) = (a.min(b), a.max(b));
            let px = |x, y| match rescale_to_pixels(&Action::Click { at: Point { x, y } }, screen).unwrap() {
                PixelAction::Click { at } => at,
                _ => unreachable!(),
            };
            let p_lo = px(lo, lo);
            let p_hi = px(hi, hi);
            prop_assert!(p_lo.x <= p_hi.x && p_lo.y <= p_hi.y);
            prop_assert!(p_hi.x < w && p_hi.y < h);
        }
    }
}

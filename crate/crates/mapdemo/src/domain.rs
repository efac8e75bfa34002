//! Process units of the domain agents. Each proposes an action when asked
//! and only changes the world once told to actuate it.

use aaosa_core::{ActionRef, ActuateEnvelope, Invocation, Outcome, Pointer, ProcessUnit, Proposal, Segment};

use crate::world::{
    apply_shift, apply_zoom, query_locations, Direction, InfoPanel, LocationKind, MapWorld, Near, ZoomOp,
};

pub const SHIFT_DRAG: &str = "shift-drag";
pub const ZOOM_IN: &str = "zoom-in";
pub const ZOOM_OUT: &str = "zoom-out";
pub const LOOKUP: &str = "lookup";
pub const NO_RESULTS: &str = "no results";
/// How far from a pointed-at spot a location still counts as meant.
pub const POINT_RADIUS: f64 = 25.0;

pub fn shift_command(d: Direction) -> String {
    format!("shift-{}", d.name())
}

fn propose(command: String, inv: &Invocation<'_>) -> Outcome {
    Outcome {
        done: false,
        suggestions: vec![Proposal { action: ActionRef::Handle(command), confidence: inv.confidence }],
        child_requests: Vec::new(),
    }
}

fn first_pointer(segments: &[Segment]) -> Option<&Pointer> {
    segments.iter().find_map(|s| match s {
        Segment::Pointer(p) => Some(p),
        Segment::Text(_) => None,
    })
}

fn handle_command(action: &ActionRef) -> Option<&str> {
    match action {
        ActionRef::Handle(c) => Some(c),
        _ => None,
    }
}

#[derive(Debug, Default)]
pub struct ShiftingProcess;

impl ProcessUnit<MapWorld> for ShiftingProcess {
    fn execute(&mut self, inv: &Invocation<'_>, world: &mut MapWorld) -> Outcome {
        if inv.command == SHIFT_DRAG {
            // a drag points where the user wants the view to go
            return first_pointer(&inv.request.segments)
                .and_then(|p| Direction::of_vector(p.x - world.map.center_x, p.y - world.map.center_y))
                .map_or_else(Outcome::default, |d| propose(shift_command(d), inv));
        }
        match inv.command.strip_prefix("shift-").and_then(Direction::parse) {
            Some(_) => propose(inv.command.to_string(), inv),
            None => Outcome::default(),
        }
    }

    fn actuate(&mut self, order: &ActuateEnvelope, world: &mut MapWorld) -> bool {
        let Some(d) = handle_command(&order.action).and_then(|c| c.strip_prefix("shift-")).and_then(Direction::parse)
        else {
            return false;
        };
        world.map = apply_shift(&world.map, d, &world.bounds);
        true
    }
}

#[derive(Debug, Default)]
pub struct MagnificationProcess;

impl ProcessUnit<MapWorld> for MagnificationProcess {
    fn execute(&mut self, inv: &Invocation<'_>, _world: &mut MapWorld) -> Outcome {
        match inv.command {
            ZOOM_IN | ZOOM_OUT => propose(inv.command.to_string(), inv),
            _ => Outcome::default(),
        }
    }

    fn actuate(&mut self, order: &ActuateEnvelope, world: &mut MapWorld) -> bool {
        let op = match handle_command(&order.action) {
            Some(ZOOM_IN) => ZoomOp::Bigger,
            Some(ZOOM_OUT) => ZoomOp::Smaller,
            _ => return false,
        };
        world.map = apply_zoom(&world.map, op);
        true
    }
}

/// Answers information requests about one kind of location, or any kind.
#[derive(Debug)]
pub struct InfoProcess {
    kind: Option<LocationKind>,
}

impl InfoProcess {
    pub fn new(kind: Option<LocationKind>) -> Self {
        InfoProcess { kind }
    }
}

const INFO_PREFIX: &str = "info:";

impl ProcessUnit<MapWorld> for InfoProcess {
    fn execute(&mut self, inv: &Invocation<'_>, world: &mut MapWorld) -> Outcome {
        if inv.command != LOOKUP {
            return Outcome::default();
        }
        let pointer = first_pointer(&inv.request.segments);
        let target = pointer.and_then(|p| p.target.as_deref());
        let near = pointer.filter(|p| p.target.is_none()).map(|p| Near { x: p.x, y: p.y, radius: POINT_RADIUS });
        let ids: Vec<String> = query_locations(&world.locations, self.kind, near, target)
            .map(|hits| hits.into_iter().map(|r| r.id).collect())
            .unwrap_or_default();
        propose(format!("{INFO_PREFIX}{}", ids.join(",")), inv)
    }

    fn actuate(&mut self, order: &ActuateEnvelope, world: &mut MapWorld) -> bool {
        let Some(list) = handle_command(&order.action).and_then(|c| c.strip_prefix(INFO_PREFIX)) else {
            return false;
        };
        let records: Vec<_> = list.split(',').filter_map(|id| world.location(id).cloned()).collect();
        let message = match records.as_slice() {
            [] => NO_RESULTS.to_string(),
            rs => rs.iter().map(|r| format!("{}: {}", r.name, r.info)).collect::<Vec<_>>().join("; "),
        };
        world.info = Some(InfoPanel { request_id: order.request_id, message, records });
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::LocationRecord;
    use aaosa_core::{
        new_request, tokenize_text, Address, ManualClock, PointerKind, RequestEnvelope, RequestIdAllocator, UserId,
    };

    fn req(segments: Vec<Segment>) -> RequestEnvelope {
        new_request(
            &Address::new("r#1"),
            &UserId::new("u1"),
            segments,
            &ManualClock::new(0),
            8,
            &mut RequestIdAllocator::new(),
        )
        .unwrap()
    }

    fn inv<'a>(me: &'a Address, command: &'a str, request: &'a RequestEnvelope) -> Invocation<'a> {
        Invocation { me, command, request, confidence: 0.8 }
    }

    fn order(action: &str) -> ActuateEnvelope {
        ActuateEnvelope {
            request_id: aaosa_core::RequestId(1),
            user: UserId::new("u1"),
            action: ActionRef::Handle(action.into()),
            source: Address::new("output#13"),
        }
    }

    #[test]
    fn shifting_proposes_then_actuates() {
        let me = Address::new("shifting#5");
        let mut world = MapWorld::new(vec![]);
        let r = req(vec![tokenize_text("shift right")]);
        let out = ShiftingProcess.execute(&inv(&me, "shift-east", &r), &mut world);
        assert_eq!(out.suggestions[0].action, ActionRef::Handle("shift-east".into()));
        assert_eq!(world.map.center_x, 0.0);
        assert!(ShiftingProcess.actuate(&order("shift-east"), &mut world));
        assert_eq!(world.map.center_x, 10.0);
        assert!(!ShiftingProcess.actuate(&order("zoom-in"), &mut world));
    }

    #[test]
    fn drag_direction_follows_pointer() {
        let me = Address::new("shifting#5");
        let mut world = MapWorld::new(vec![]);
        let r = req(vec![Segment::pointer(PointerKind::Drag, 100.0, 5.0)]);
        let out = ShiftingProcess.execute(&inv(&me, SHIFT_DRAG, &r), &mut world);
        assert_eq!(out.suggestions[0].action, ActionRef::Handle("shift-east".into()));
        let still = req(vec![Segment::pointer(PointerKind::Drag, 0.0, 0.0)]);
        assert!(ShiftingProcess.execute(&inv(&me, SHIFT_DRAG, &still), &mut world).suggestions.is_empty());
    }

    #[test]
    fn info_lookup_by_target_and_empty_db() {
        let hotel = LocationRecord {
            id: "h1".into(),
            kind: LocationKind::Hotel,
            name: "Grand".into(),
            x: 30.0,
            y: 40.0,
            info: "Four stars".into(),
        };
        let me = Address::new("hotels#8");
        let mut world = MapWorld::new(vec![hotel]);
        let mut p = Pointer { kind: PointerKind::Arrow, x: 30.0, y: 40.0, target: Some("h1".into()) };
        let r = req(vec![Segment::Pointer(p.clone()), tokenize_text("tell me about this hotel")]);
        let mut unit = InfoProcess::new(Some(LocationKind::Hotel));
        let out = unit.execute(&inv(&me, LOOKUP, &r), &mut world);
        let ActionRef::Handle(cmd) = &out.suggestions[0].action else { panic!() };
        assert_eq!(cmd, "info:h1");
        assert!(unit.actuate(&order(cmd), &mut world));
        assert_eq!(world.info.as_ref().unwrap().message, "Grand: Four stars");

        p.target = None;
        p.x = 35.0;
        let r = req(vec![Segment::Pointer(p)]);
        let out = unit.execute(&inv(&me, LOOKUP, &r), &mut world);
        assert_eq!(out.suggestions[0].action, ActionRef::Handle("info:h1".into()));

        let mut empty = MapWorld::new(vec![]);
        let out = unit.execute(&inv(&me, LOOKUP, &r), &mut empty);
        let ActionRef::Handle(cmd) = &out.suggestions[0].action else { panic!() };
        assert!(unit.actuate(&order(cmd), &mut empty));
        assert_eq!(empty.info.unwrap().message, NO_RESULTS);
    }
}

use super::*;
use crate::context::{AttributeDescriptor, ContextValue};
use alloc::vec;

fn schema() -> ContextSchema {
    ContextSchema::new(vec![
        AttributeDescriptor::categorical("user", ["u"]),
        AttributeDescriptor::cyclic("time", 86400.0),
    ])
    .unwrap()
}

fn ctx(t: f64) -> ContextSnapshot {
    ContextSnapshot::new(vec![ContextValue::label("u"), ContextValue::Scalar(t)], 0)
}

fn registry(devices: Vec<DeviceSpec>) -> Registry {
    Registry {
        classes: vec![
            ClassDecl { id: "light".into(), parent: None },
            ClassDecl { id: "dimmable".into(), parent: Some("light".into()) },
            ClassDecl { id: "camera".into(), parent: None },
        ],
        devices,
    }
}

fn decider(devices: Vec<DeviceSpec>) -> Decider {
    Decider::new(registry(devices), &schema(), &Hyperparameters::default()).unwrap()
}

fn external(id: &str, controller: &str, actions: &[&'static str]) -> DeviceSpec {
    let mut d = DeviceSpec::local(id, ["light"], actions.iter().copied());
    d.backing = Backing::External(controller.into());
    d
}

#[test]
fn hierarchy_rejects_cycles_and_unknown_parents() {
    let cyc = [
        ClassDecl { id: "a".into(), parent: Some("b".into()) },
        ClassDecl { id: "b".into(), parent: Some("a".into()) },
    ];
    assert!(ClassHierarchy::new(&cyc).is_err());
    let dangling = [ClassDecl { id: "a".into(), parent: Some("z".into()) }];
    assert!(ClassHierarchy::new(&dangling).is_err());
    let h = ClassHierarchy::new(&registry(vec![]).classes).unwrap();
    assert_eq!(h.ancestors(&"dimmable".into()), vec![ClassId::from("dimmable"), ClassId::from("light")]);
}

#[test]
fn registry_validation() {
    let dup = registry(vec![DeviceSpec::local("a", ["light"], ["on"]), DeviceSpec::local("a", ["light"], ["on"])]);
    assert!(dup.hierarchy().is_err());
    let unknown = registry(vec![DeviceSpec::local("a", ["fridge"], ["on"])]);
    assert!(unknown.hierarchy().is_err());
    let empty = Decider::new(Registry::default(), &schema(), &Hyperparameters::default()).unwrap();
    let mut empty = empty;
    assert_eq!(empty.resolve(&Request::act(), &ctx(0.0)), Err(Error::EmptyRegistry));
}

#[test]
fn argmax_wins() {
    let mut d = Decider::new(
        registry(vec![external("d1", "hub", &["on"]), external("d2", "hub2", &["on"])]),
        &schema(),
        &Hyperparameters::default(),
    )
    .unwrap();
    d.attach_controller(Box::new(StaticController::new("hub", 0.8))).unwrap();
    d.attach_controller(Box::new(StaticController::new("hub2", 0.6))).unwrap();
    let p = d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    assert_eq!(p, Proposal::new("d1", Some("on".into()), 0.8));
}

#[test]
fn ties_break_on_device_id() {
    let mut d = decider(vec![DeviceSpec::local("b", ["light"], ["on"]), DeviceSpec::local("a", ["light"], ["on"])]);
    let p = d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    assert_eq!(p.device, DeviceId::from("a"));
    assert_eq!(p.utility, 0.5);
}

#[test]
fn class_filter_beats_utility() {
    let mut d = decider(vec![
        DeviceSpec::local("cam", ["camera"], ["turnOn"]),
        DeviceSpec::local("lamp", ["dimmable"], ["turnOn", "turnOff"]),
    ]);
    // make the camera look very attractive
    for _ in 0..3 {
        d.resolve(&Request::new(Some("camera"), None), &ctx(0.0)).unwrap();
        d.accept().unwrap();
    }
    let p = d.resolve(&Request::new(Some("light"), None), &ctx(0.0)).unwrap();
    assert_eq!(p.device, DeviceId::from("lamp"));
    let losers = &d.episode().unwrap().last_round;
    assert!(losers.iter().any(|b| b.proposal.device.as_str() == "cam" && b.proposal.utility == 0.0));
}

#[test]
fn reject_moves_to_next_then_exhausts() {
    let mut d = decider(vec![DeviceSpec::local("a", ["light"], ["on"]), DeviceSpec::local("b", ["light"], ["on"])]);
    let first = d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    assert_eq!(first.device.as_str(), "a");
    let second = d.reject().unwrap();
    assert_eq!(second.device.as_str(), "b");
    assert_eq!(d.reject(), Err(Error::Exhausted));
    assert_eq!(d.episode().unwrap().status, EpisodeStatus::Exhausted);
    assert_eq!(d.reject(), Err(Error::EpisodeState("no open episode")));
    // the rejection reached model a
    let a = d.model(&"a".into()).unwrap();
    assert!(a.states()[0].utilities.get(&"on".into()).unwrap() < 0.5);
}

#[test]
fn reject_walks_through_actions_of_one_device() {
    let mut d = decider(vec![DeviceSpec::local("a", ["light"], ["on", "off", "dim"])]);
    let mut seen = BTreeSet::new();
    let mut p = d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    loop {
        assert!(seen.insert(p.action.clone()));
        match d.reject() {
            Ok(next) => p = next,
            Err(Error::Exhausted) => break,
            Err(e) => panic!("{e}"),
        }
    }
    assert_eq!(seen.len(), 3);
}

#[test]
fn accept_sends_explicit_and_implicit_feedback() {
    let mut d = decider(vec![
        DeviceSpec::local("d1", ["light"], ["on"]),
        DeviceSpec::local("d2", ["light"], ["on"]),
        DeviceSpec::local("d3", ["light"], ["on"]),
    ]);
    d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    let w = d.accept().unwrap();
    assert_eq!(w.device.as_str(), "d1");
    let kinds = |id: &str| -> Vec<(bool, FeedbackKind)> {
        d.model(&id.into()).unwrap().states()[0].cache.iter().map(|e| (e.positive, e.kind)).collect()
    };
    assert_eq!(kinds("d1"), vec![(true, FeedbackKind::Explicit)]);
    assert_eq!(kinds("d2"), vec![(false, FeedbackKind::Implicit)]);
    assert_eq!(kinds("d3"), vec![(false, FeedbackKind::Implicit)]);
    assert_eq!(d.episode().unwrap().status, EpisodeStatus::Accepted);
    assert!(d.accept().is_err());
}

#[test]
fn single_device_gets_no_implicit_feedback() {
    let mut d = decider(vec![DeviceSpec::local("d1", ["light"], ["on"])]);
    d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    d.accept().unwrap();
    assert_eq!(d.model(&"d1".into()).unwrap().states()[0].cache.len(), 1);
}

#[test]
fn zero_implicit_weight_leaves_losers_untouched() {
    let mut hyper = Hyperparameters::default();
    hyper.implicit_weight = 0.0;
    let mut d = Decider::new(
        registry(vec![DeviceSpec::local("d1", ["light"], ["on"]), DeviceSpec::local("d2", ["light"], ["on"])]),
        &schema(),
        &hyper,
    )
    .unwrap();
    d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    d.accept().unwrap();
    let loser = &d.model(&"d2".into()).unwrap().states()[0];
    assert_eq!(loser.utilities.get(&"on".into()), Some(0.5));
    assert!(loser.cache.is_empty());
}

#[test]
fn incompatible_only_request_still_answers() {
    let mut d = decider(vec![DeviceSpec::local("cam", ["camera"], ["turnOn"])]);
    let p = d.resolve(&Request::new(Some("light"), Some("turnOn")), &ctx(0.0)).unwrap();
    assert_eq!(p.utility, 0.0);
    assert_eq!(d.reject(), Err(Error::Exhausted));
}

#[test]
fn zero_proposals_are_not_fallbacks_after_rejection() {
    let mut d = decider(vec![
        DeviceSpec::local("cam", ["camera"], ["turnOn"]),
        DeviceSpec::local("lamp", ["light"], ["turnOn"]),
    ]);
    let p = d.resolve(&Request::new(Some("light"), None), &ctx(0.0)).unwrap();
    assert_eq!(p.device.as_str(), "lamp");
    assert_eq!(d.reject(), Err(Error::Exhausted));
}

#[test]
fn resolve_refuses_while_open_and_abandon_clears() {
    let mut d = decider(vec![DeviceSpec::local("a", ["light"], ["on"])]);
    d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    assert!(matches!(d.resolve(&Request::act(), &ctx(0.0)), Err(Error::EpisodeState(_))));
    d.abandon();
    assert!(d.episode().is_none());
    d.resolve(&Request::act(), &ctx(0.0)).unwrap();
}

#[test]
fn external_controller_gets_feedback() {
    let mut d = Decider::new(
        registry(vec![external("hue1", "hue", &["on", "off"]), DeviceSpec::local("lamp", ["light"], ["on"])]),
        &schema(),
        &Hyperparameters::default(),
    )
    .unwrap();
    assert!(d.resolve(&Request::act(), &ctx(0.0)).is_err());
    d.abandon();
    d.attach_controller(Box::new(StaticController::new("hue", 0.3).with("hue1", "off", 0.9))).unwrap();
    let p = d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    assert_eq!(p, Proposal::new("hue1", Some("off".into()), 0.9));
    d.accept().unwrap();
    // the local lamp lost and got an implicit negative
    let lamp = &d.model(&"lamp".into()).unwrap().states()[0];
    assert_eq!(lamp.cache[0].kind, FeedbackKind::Implicit);
}

#[test]
fn unknown_controller_is_refused() {
    let mut d = decider(vec![DeviceSpec::local("a", ["light"], ["on"])]);
    assert!(d.attach_controller(Box::new(StaticController::new("nope", 0.5))).is_err());
}

#[test]
fn registry_json_shape() {
    let json = r#"{
        "classes": [{"id": "light"}, {"id": "dimmable", "parent": "light"}],
        "devices": [
            {"id": "lamp", "classes": ["dimmable"], "actions": ["turnOn", "turnOff"], "backing": "local"},
            {"id": "hue1", "classes": ["light"], "actions": ["turnOn"], "backing": {"external": "hue"}}
        ]
    }"#;
    let r: Registry = serde_json::from_str(json).unwrap();
    assert_eq!(r.devices[1].backing, Backing::External("hue".into()));
    r.hierarchy().unwrap();
    let back: Registry = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn models_restore_round_trip() {
    let devices = vec![DeviceSpec::local("a", ["light"], ["on"])];
    let mut d = decider(devices.clone());
    d.resolve(&Request::act(), &ctx(0.0)).unwrap();
    d.accept().unwrap();
    let models = d.into_models();
    let restored = Decider::with_models(registry(devices.clone()), models.clone()).unwrap();
    assert_eq!(restored.models().cloned().collect::<Vec<_>>(), models);
    assert!(Decider::with_models(registry(devices), vec![]).is_err());
}

//! Wiring of the multimodal map agent network.

use std::collections::BTreeSet;

use aaosa_core::{
    tokenize_text, ActionRef, Address, AddressBook, Agent, KnowledgeBase, NameServer, Network, NullProcess, Pattern,
    PolicyConfig, ProcessUnit, RouterError, ScheduleConfig,
};

use crate::corpus::DEMO_CORPUS;
use crate::domain::{InfoProcess, MagnificationProcess, ShiftingProcess, LOOKUP, SHIFT_DRAG, ZOOM_IN, ZOOM_OUT};
use crate::regulator::{RegulatorConfig, RegulatorProcess};
use crate::sifter::{SifterProcess, SifterRole};
use crate::world::{LocationKind, LocationRecord, MapWorld};

pub const PRESET_WEIGHT: f64 = 0.8;
pub const SPECIFIC_WEIGHT: f64 = 0.9;
pub const GENERAL_WEIGHT: f64 = 0.7;

#[derive(Clone, Debug, PartialEq)]
pub struct DemoConfig {
    pub policy: PolicyConfig,
    pub regulator: RegulatorConfig,
    pub schedule: ScheduleConfig,
    /// Feed the bundled command corpus to every agent's token statistics.
    pub prime_stats: bool,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            policy: PolicyConfig::default(),
            regulator: RegulatorConfig::default(),
            schedule: ScheduleConfig::default(),
            prime_stats: true,
        }
    }
}

impl DemoConfig {
    pub fn with_seed(seed: u64) -> Self {
        let mut cfg = DemoConfig::default();
        cfg.policy.rng_seed = seed;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DemoAddresses {
    pub nl_input: Address,
    pub pointer_input: Address,
    pub regulator: Address,
    pub viewport: Address,
    pub shifting: Address,
    pub magnification: Address,
    pub locations: Address,
    pub hotels: Address,
    pub restaurants: Address,
    pub general_information: Address,
    pub viewport_output: Address,
    pub information_output: Address,
    pub output: Address,
    pub feedback: Address,
}

impl DemoAddresses {
    fn allocate(ns: &mut NameServer) -> Self {
        DemoAddresses {
            nl_input: ns.allocate_address("nl-input"),
            pointer_input: ns.allocate_address("pointer-input"),
            regulator: ns.allocate_address("input-regulator"),
            viewport: ns.allocate_address("map-view-port"),
            shifting: ns.allocate_address("shifting"),
            magnification: ns.allocate_address("magnification"),
            locations: ns.allocate_address("locations"),
            hotels: ns.allocate_address("hotels"),
            restaurants: ns.allocate_address("restaurants"),
            general_information: ns.allocate_address("general-information"),
            viewport_output: ns.allocate_address("view-port-output"),
            information_output: ns.allocate_address("information-output"),
            output: ns.allocate_address("output"),
            feedback: ns.allocate_address("feedback"),
        }
    }

    pub fn all(&self) -> [&Address; 14] {
        [
            &self.nl_input,
            &self.pointer_input,
            &self.regulator,
            &self.viewport,
            &self.shifting,
            &self.magnification,
            &self.locations,
            &self.hotels,
            &self.restaurants,
            &self.general_information,
            &self.viewport_output,
            &self.information_output,
            &self.output,
            &self.feedback,
        ]
    }
}

pub struct DemoNetwork {
    pub net: Network<MapWorld>,
    pub addrs: DemoAddresses,
}

fn handle(c: &str) -> ActionRef {
    ActionRef::Handle(c.to_string())
}

fn singles(tokens: &[&str], action: ActionRef, weight: f64) -> Vec<Pattern> {
    tokens.iter().map(|t| Pattern::preset([*t], action.clone(), weight)).collect()
}

fn viewport_kb(a: &DemoAddresses) -> Vec<Pattern> {
    let mut kb =
        singles(&["move", "shift", "show", "mouse-drag"], ActionRef::Forward(a.shifting.clone()), PRESET_WEIGHT);
    kb.extend(singles(
        &["bigger", "smaller", "magnify", "mouse-click"],
        ActionRef::Forward(a.magnification.clone()),
        PRESET_WEIGHT,
    ));
    kb
}

fn shifting_kb() -> Vec<Pattern> {
    let mut kb = Vec::new();
    for (dir, tokens) in [
        ("east", ["east", "right", "mouse-on-right-border"]),
        ("west", ["west", "left", "mouse-on-left-border"]),
        ("north", ["up", "top", "north"]),
        ("south", ["down", "under", "south"]),
    ] {
        kb.extend(singles(&tokens, handle(&format!("shift-{dir}")), PRESET_WEIGHT));
    }
    kb.push(Pattern::preset(["mouse-drag"], handle(SHIFT_DRAG), PRESET_WEIGHT));
    kb
}

fn magnification_kb() -> Vec<Pattern> {
    let mut kb = singles(&["bigger", "magnify", "mouse-click"], handle(ZOOM_IN), PRESET_WEIGHT);
    kb.extend(singles(&["smaller"], handle(ZOOM_OUT), PRESET_WEIGHT));
    kb.push(Pattern::preset(["zoom", "in"], handle(ZOOM_IN), PRESET_WEIGHT));
    kb.push(Pattern::preset(["zoom", "out"], handle(ZOOM_OUT), PRESET_WEIGHT));
    kb
}

fn locations_kb(a: &DemoAddresses) -> Vec<Pattern> {
    let mut kb = vec![
        Pattern::preset(["hotel"], ActionRef::Forward(a.hotels.clone()), SPECIFIC_WEIGHT),
        Pattern::preset(["restaurant"], ActionRef::Forward(a.restaurants.clone()), SPECIFIC_WEIGHT),
    ];
    kb.extend(singles(&["this", "about"], ActionRef::Forward(a.general_information.clone()), GENERAL_WEIGHT));
    kb
}

fn tokens_of(kb: &[Pattern]) -> BTreeSet<String> {
    kb.iter().flat_map(|p| p.tokens.iter().cloned()).collect()
}

struct Spec {
    address: Address,
    process: Box<dyn ProcessUnit<MapWorld>>,
    kb: Vec<Pattern>,
    output: Option<Address>,
    fallback: Option<Address>,
    learn_criteria: bool,
    keep_fraction: Option<f64>,
}

impl Spec {
    fn new(address: &Address, process: Box<dyn ProcessUnit<MapWorld>>) -> Self {
        Spec {
            address: address.clone(),
            process,
            kb: Vec::new(),
            output: None,
            fallback: None,
            learn_criteria: false,
            keep_fraction: None,
        }
    }

    fn kb(mut self, kb: Vec<Pattern>) -> Self {
        self.kb = kb;
        self
    }

    fn output(mut self, a: &Address) -> Self {
        self.output = Some(a.clone());
        self
    }

    fn fallback(mut self, a: &Address) -> Self {
        self.fallback = Some(a.clone());
        self
    }

    fn learning(mut self) -> Self {
        self.learn_criteria = true;
        self
    }

    fn pass_through(mut self) -> Self {
        self.keep_fraction = Some(0.0);
        self
    }

    fn build(self, base: &PolicyConfig) -> Agent<MapWorld> {
        let mut cfg = base.clone();
        cfg.learn_criteria = self.learn_criteria;
        if let Some(k) = self.keep_fraction {
            cfg.keep_fraction = k;
        }
        let mut book = AddressBook::new();
        if let Some(f) = self.fallback {
            book.add_fallback(f);
        }
        let caps = tokens_of(&self.kb);
        let mut agent = Agent::new(self.address, self.process)
            .with_kb(KnowledgeBase::new(self.kb))
            .with_book(book)
            .with_config(cfg)
            .with_capabilities(caps);
        if let Some(o) = self.output {
            agent = agent.with_output(o);
        }
        agent
    }
}

/// Peers each agent keeps after the opening round of introductions.
fn links(a: &DemoAddresses) -> Vec<(&Address, Vec<&Address>)> {
    vec![
        (&a.regulator, vec![&a.viewport, &a.locations]),
        (&a.viewport, vec![&a.shifting, &a.magnification]),
        (&a.locations, vec![&a.hotels, &a.restaurants, &a.general_information]),
    ]
}

/// Builds, introduces and wires the fourteen demo agents.
pub fn build_demo_network(
    ns: &mut NameServer,
    locations: Vec<LocationRecord>,
    cfg: &DemoConfig,
) -> Result<DemoNetwork, RouterError> {
    let a = DemoAddresses::allocate(ns);
    let p = &cfg.policy;
    let specs = vec![
        Spec::new(&a.nl_input, Box::new(NullProcess)).fallback(&a.regulator),
        Spec::new(&a.pointer_input, Box::new(NullProcess)).fallback(&a.regulator),
        Spec::new(&a.regulator, Box::new(RegulatorProcess::new(cfg.regulator))).fallback(&a.viewport),
        Spec::new(&a.viewport, Box::new(NullProcess)).kb(viewport_kb(&a)).learning(),
        Spec::new(&a.shifting, Box::new(ShiftingProcess)).kb(shifting_kb()).output(&a.viewport_output),
        Spec::new(&a.magnification, Box::new(MagnificationProcess)).kb(magnification_kb()).output(&a.viewport_output),
        Spec::new(&a.locations, Box::new(NullProcess)).kb(locations_kb(&a)).learning(),
        Spec::new(&a.hotels, Box::new(InfoProcess::new(Some(LocationKind::Hotel))))
            .kb(singles(&["hotel"], handle(LOOKUP), PRESET_WEIGHT))
            .output(&a.information_output),
        Spec::new(&a.restaurants, Box::new(InfoProcess::new(Some(LocationKind::Restaurant))))
            .kb(singles(&["restaurant"], handle(LOOKUP), PRESET_WEIGHT))
            .output(&a.information_output),
        Spec::new(&a.general_information, Box::new(InfoProcess::new(None)))
            .kb(singles(&["this", "about", "tell", "what", "info"], handle(LOOKUP), PRESET_WEIGHT))
            .output(&a.information_output),
        Spec::new(&a.viewport_output, Box::new(SifterProcess::new(SifterRole::Relay))).output(&a.output).pass_through(),
        Spec::new(&a.information_output, Box::new(SifterProcess::new(SifterRole::Relay)))
            .output(&a.output)
            .pass_through(),
        Spec::new(&a.output, Box::new(SifterProcess::new(SifterRole::Actuator))).pass_through(),
        Spec::new(&a.feedback, Box::new(NullProcess)),
    ];

    let mut net = Network::new(MapWorld::new(locations), cfg.schedule);
    for spec in specs {
        net.attach(spec.build(p))?;
    }
    net.run_until_idle()?;

    let keep = links(&a);
    for agent in net.agents_mut() {
        let allowed: Vec<Address> = keep
            .iter()
            .find(|(owner, _)| *owner == agent.address())
            .map(|(_, peers)| peers.iter().map(|x| (*x).clone()).collect())
            .unwrap_or_default();
        agent.book.retain(|e| allowed.contains(&e.address));
    }

    if cfg.prime_stats {
        for agent in net.agents_mut() {
            for line in DEMO_CORPUS {
                agent.stats.observe_tokens(&[tokenize_text(line)]);
            }
        }
    }
    net.take_trace();
    Ok(DemoNetwork { net, addrs: a })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourteen_agents_with_expected_links() {
        let mut ns = NameServer::new();
        let demo = build_demo_network(&mut ns, vec![], &DemoConfig::default()).unwrap();
        assert_eq!(demo.net.agents().count(), 14);
        let vp = demo.net.agent(&demo.addrs.viewport).unwrap();
        let peers: Vec<_> = vp.book.entries().iter().map(|e| e.address.label()).collect();
        assert_eq!(peers, ["shifting", "magnification"]);
        let reg = demo.net.agent(&demo.addrs.regulator).unwrap();
        assert_eq!(reg.book.len(), 2);
        assert!(demo.net.agent(&demo.addrs.nl_input).unwrap().book.is_empty());
        assert_eq!(
            demo.net.agent(&demo.addrs.nl_input).unwrap().book.fallbacks(),
            std::slice::from_ref(&demo.addrs.regulator)
        );
        assert!(demo.net.trace().is_empty());
    }

    #[test]
    fn rebuild_gives_new_addresses() {
        let mut ns = NameServer::new();
        let first = build_demo_network(&mut ns, vec![], &DemoConfig::default()).unwrap();
        let second = build_demo_network(&mut ns, vec![], &DemoConfig::default()).unwrap();
        for (x, y) in first.addrs.all().iter().zip(second.addrs.all()) {
            assert_ne!(*x, y);
            assert_eq!(x.label(), y.label());
        }
    }

    #[test]
    fn priming_makes_view_informative() {
        let mut ns = NameServer::new();
        let demo = build_demo_network(&mut ns, vec![], &DemoConfig::default()).unwrap();
        let stats = &demo.net.agent(&demo.addrs.viewport).unwrap().stats;
        let iv = |t: &str| stats.information_value(t).unwrap();
        assert_eq!(iv("view"), 1.0);
        for common in ["the", "to", "right", "shift"] {
            assert!(iv(common) < 1.0, "{common} should occur in the corpus");
        }
        assert!(iv("the") < iv("right"));
    }
}

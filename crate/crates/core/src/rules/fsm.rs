//! Compiles an ORDER expression into a deterministic finite state machine.
//!
//! The expression is first lowered to an epsilon-NFA (Thompson style), then
//! determinized with the subset construction. State numbering follows a BFS
//! from the start state with labels visited in sorted order, so identical
//! inputs always yield identical machines.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{OrderExpr, RuleSpec};

/// Opaque state handle issued by [`Fsm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

/// Outcome of driving one event through the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepResult {
    Next(StateId),
    NoTransition,
}

/// Classification of a whole trace against the machine's language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LangResult {
    Accept,
    Prefix,
    Reject,
}

/// Deterministic order automaton over event labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fsm {
    start: StateId,
    accepting: BTreeSet<StateId>,
    transitions: BTreeMap<(usize, String), usize>,
    alphabet: BTreeSet<String>,
    state_count: usize,
    /// Event label -> indexes into the owning rule's `ensures` list, for
    /// ensure specs carrying an `after` label (aggregates expanded).
    pub ensuring_points: BTreeMap<String, Vec<usize>>,
}

impl Fsm {
    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn is_accepting(&self, state: StateId) -> bool {
        self.accepting.contains(&state)
    }

    pub fn state_count(&self) -> usize {
        self.state_count
    }

    pub fn alphabet(&self) -> &BTreeSet<String> {
        &self.alphabet
    }

    /// Single deterministic step. `state` must have been issued by this
    /// machine; a forged id is a caller defect.
    pub fn step(&self, state: StateId, label: &str) -> StepResult {
        assert!(state.0 < self.state_count, "unknown state id {}", state.0);
        match self.transitions.get(&(state.0, label.to_string())) {
            Some(&next) => StepResult::Next(StateId(next)),
            None => StepResult::NoTransition,
        }
    }

    /// Classifies a trace: a word of the language, a proper prefix of one,
    /// or neither. Every constructed state can still reach an accepting
    /// state, so a completed drive that ends non-accepting is a prefix.
    pub fn language_check<S: AsRef<str>>(&self, trace: &[S]) -> LangResult {
        let mut state = self.start;
        for label in trace {
            match self.step(state, label.as_ref()) {
                StepResult::Next(next) => state = next,
                StepResult::NoTransition => return LangResult::Reject,
            }
        }
        if self.is_accepting(state) {
            LangResult::Accept
        } else {
            LangResult::Prefix
        }
    }
}

struct Nfa {
    // eps[s] and steps[s] are edge lists out of state s.
    eps: Vec<Vec<usize>>,
    steps: Vec<Vec<(String, usize)>>,
}

impl Nfa {
    fn new() -> Self {
        Self {
            eps: Vec::new(),
            steps: Vec::new(),
        }
    }

    fn state(&mut self) -> usize {
        self.eps.push(Vec::new());
        self.steps.push(Vec::new());
        self.eps.len() - 1
    }

    fn eps_edge(&mut self, from: usize, to: usize) {
        self.eps[from].push(to);
    }

    fn label_edge(&mut self, from: usize, label: &str, to: usize) {
        self.steps[from].push((label.to_string(), to));
    }

    /// Lowers `expr` into the automaton; returns (entry, exit).
    fn build(&mut self, expr: &OrderExpr, aggregates: &BTreeMap<String, BTreeSet<String>>) -> (usize, usize) {
        match expr {
            OrderExpr::Label(l) => {
                let a = self.state();
                let b = self.state();
                match aggregates.get(l) {
                    Some(members) => {
                        for m in members {
                            self.label_edge(a, m, b);
                        }
                    }
                    None => self.label_edge(a, l, b),
                }
                (a, b)
            }
            OrderExpr::Seq(parts) => {
                let a = self.state();
                let mut prev = a;
                for p in parts {
                    let (pa, pb) = self.build(p, aggregates);
                    self.eps_edge(prev, pa);
                    prev = pb;
                }
                (a, prev)
            }
            OrderExpr::Alt(parts) => {
                let a = self.state();
                let b = self.state();
                for p in parts {
                    let (pa, pb) = self.build(p, aggregates);
                    self.eps_edge(a, pa);
                    self.eps_edge(pb, b);
                }
                (a, b)
            }
            OrderExpr::Star(inner) => {
                let a = self.state();
                let b = self.state();
                let (ia, ib) = self.build(inner, aggregates);
                self.eps_edge(a, ia);
                self.eps_edge(ib, ia);
                self.eps_edge(a, b);
                self.eps_edge(ib, b);
                (a, b)
            }
            OrderExpr::Plus(inner) => {
                let a = self.state();
                let b = self.state();
                let (ia, ib) = self.build(inner, aggregates);
                self.eps_edge(a, ia);
                self.eps_edge(ib, ia);
                self.eps_edge(ib, b);
                (a, b)
            }
            OrderExpr::Opt(inner) => {
                let a = self.state();
                let b = self.state();
                let (ia, ib) = self.build(inner, aggregates);
                self.eps_edge(a, ia);
                self.eps_edge(ib, b);
                self.eps_edge(a, b);
                (a, b)
            }
        }
    }

    fn closure(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = set.clone();
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(s) = stack.pop() {
            for &t in &self.eps[s] {
                if out.insert(t) {
                    stack.push(t);
                }
            }
        }
        out
    }
}

/// Builds the deterministic automaton for an order expression. Aggregate
/// labels at the leaves expand to their member events, so the machine's
/// alphabet contains event labels only.
pub fn build_fsm(order: &OrderExpr, aggregates: &BTreeMap<String, BTreeSet<String>>) -> Fsm {
    let mut nfa = Nfa::new();
    let (entry, exit) = nfa.build(order, aggregates);

    let mut alphabet: BTreeSet<String> = BTreeSet::new();
    for edges in &nfa.steps {
        for (label, _) in edges {
            alphabet.insert(label.clone());
        }
    }

    let start_set = nfa.closure(&BTreeSet::from([entry]));
    let mut ids: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::new();
    ids.insert(start_set.clone(), 0);
    let mut order_of: Vec<BTreeSet<usize>> = vec![start_set.clone()];
    let mut queue: VecDeque<BTreeSet<usize>> = VecDeque::from([start_set]);
    let mut transitions: BTreeMap<(usize, String), usize> = BTreeMap::new();

    while let Some(set) = queue.pop_front() {
        let from = ids[&set];
        for label in &alphabet {
            let mut next = BTreeSet::new();
            for &s in &set {
                for (l, t) in &nfa.steps[s] {
                    if l == label {
                        next.insert(*t);
                    }
                }
            }
            if next.is_empty() {
                continue;
            }
            let next = nfa.closure(&next);
            let to = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    let id = order_of.len();
                    ids.insert(next.clone(), id);
                    order_of.push(next.clone());
                    queue.push_back(next);
                    id
                }
            };
            transitions.insert((from, label.clone()), to);
        }
    }

    let accepting: BTreeSet<StateId> = order_of
        .iter()
        .enumerate()
        .filter(|(_, set)| set.contains(&exit))
        .map(|(i, _)| StateId(i))
        .collect();

    Fsm {
        start: StateId(0),
        accepting,
        transitions,
        alphabet,
        state_count: order_of.len(),
        ensuring_points: BTreeMap::new(),
    }
}

/// Builds the rule's order automaton and records which events fire its
/// `after`-labelled ensure specs.
pub fn rule_fsm(rule: &RuleSpec) -> Fsm {
    let mut fsm = build_fsm(&rule.order, &rule.aggregates);
    for (idx, spec) in rule.ensures.iter().enumerate() {
        if let Some(after) = &spec.after_label {
            for event in rule.expand_label(after) {
                fsm.ensuring_points.entry(event).or_default().push(idx);
            }
        }
    }
    fsm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::parse_order_expr;

    fn cipher_like() -> Fsm {
        // order `g, Init, d*` with Init := i1 | i2
        let order = parse_order_expr("g, Init, d*").unwrap();
        let aggregates = BTreeMap::from([(
            "Init".to_string(),
            BTreeSet::from(["i1".to_string(), "i2".to_string()]),
        )]);
        build_fsm(&order, &aggregates)
    }

    fn check(fsm: &Fsm, trace: &[&str]) -> LangResult {
        fsm.language_check(trace)
    }

    #[test]
    fn aggregate_alternation_language() {
        let fsm = cipher_like();
        assert_eq!(check(&fsm, &["g", "i1"]), LangResult::Accept);
        assert_eq!(check(&fsm, &["g", "i2"]), LangResult::Accept);
        assert_eq!(check(&fsm, &["g", "i1", "d"]), LangResult::Accept);
        assert_eq!(check(&fsm, &["g", "i1", "d", "d"]), LangResult::Accept);
        assert_eq!(check(&fsm, &["g", "d"]), LangResult::Reject);
        assert_eq!(check(&fsm, &["i1", "g"]), LangResult::Reject);
    }

    #[test]
    fn single_event_machine() {
        let order = parse_order_expr("e").unwrap();
        let fsm = build_fsm(&order, &BTreeMap::new());
        assert_eq!(fsm.state_count(), 2);
        assert_eq!(check(&fsm, &["e"]), LangResult::Accept);
        assert_eq!(check(&fsm, &[]), LangResult::Prefix);
        assert_eq!(check(&fsm, &["e", "e"]), LangResult::Reject);
    }

    #[test]
    fn optional_event_accepts_empty() {
        let order = parse_order_expr("a?").unwrap();
        let fsm = build_fsm(&order, &BTreeMap::new());
        assert!(fsm.is_accepting(fsm.start()));
        assert_eq!(check(&fsm, &[]), LangResult::Accept);
        assert_eq!(check(&fsm, &["a"]), LangResult::Accept);
        assert_eq!(check(&fsm, &["a", "a"]), LangResult::Reject);
    }

    #[test]
    fn step_follows_and_refuses() {
        let fsm = cipher_like();
        let after_g = match fsm.step(fsm.start(), "g") {
            StepResult::Next(s) => s,
            StepResult::NoTransition => panic!("g must leave the start state"),
        };
        assert_eq!(fsm.step(fsm.start(), "d"), StepResult::NoTransition);
        assert_eq!(fsm.step(after_g, "d"), StepResult::NoTransition);
        assert!(matches!(fsm.step(after_g, "i2"), StepResult::Next(_)));
    }

    #[test]
    fn accepting_sink_has_no_way_out() {
        let order = parse_order_expr("e").unwrap();
        let fsm = build_fsm(&order, &BTreeMap::new());
        let sink = match fsm.step(fsm.start(), "e") {
            StepResult::Next(s) => s,
            StepResult::NoTransition => unreachable!(),
        };
        assert!(fsm.is_accepting(sink));
        assert_eq!(fsm.step(sink, "e"), StepResult::NoTransition);
    }

    #[test]
    fn prefix_classification() {
        let fsm = cipher_like();
        assert_eq!(check(&fsm, &["g"]), LangResult::Prefix);
        assert_eq!(check(&fsm, &[]), LangResult::Prefix);
    }

    #[test]
    fn determinism_is_structural() {
        // Building twice yields identical machines, transitions included.
        let a = cipher_like();
        let b = cipher_like();
        assert_eq!(a, b);
    }
}

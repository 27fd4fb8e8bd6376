//! Exact path enumeration: user calls are inlined, every branch contributes
//! both arms, and each path carries the value identities and literal facts
//! observed along it.
//!
//! Enumeration re-runs a small interpreter once per path, steered by a
//! vector of branch decisions that is backtracked depth-first (then-arm
//! before else-arm). With no loops and no recursion every run terminates
//! and the decision space is finite.

use std::collections::BTreeMap;

use crate::model::LiteralValue;

use super::{
    Arg, CallKind, CallStep, ExecutionPath, FunctionDef, PathStep, Program, Statement,
    StatementKind, ValueFacts, ValueId,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("path budget exceeded: program has {product} execution paths, bound is {bound}")]
pub struct PathBudgetExceeded {
    pub product: u128,
    pub bound: usize,
}

/// Exact number of execution paths through inlined `main`, saturating.
pub fn path_product(program: &Program) -> u128 {
    // Per block: (paths falling off the end, paths leaving via return).
    fn seq(program: &Program, stmts: &[Statement]) -> (u128, u128) {
        let mut through: u128 = 1;
        let mut returned: u128 = 0;
        for s in stmts {
            match &s.kind {
                StatementKind::Return { .. } => {
                    return (0, returned.saturating_add(through));
                }
                StatementKind::Branch {
                    then_block,
                    else_block,
                } => {
                    let (t_th, t_ret) = seq(program, then_block);
                    let (e_th, e_ret) = seq(program, else_block);
                    returned = returned
                        .saturating_add(through.saturating_mul(t_ret.saturating_add(e_ret)));
                    through = through.saturating_mul(t_th.saturating_add(e_th));
                }
                StatementKind::UserCall { function, .. } => {
                    let callee = &program.functions[function];
                    let (c_th, c_ret) = seq(program, &callee.body);
                    // Callee returns resume the caller, so both count.
                    through = through.saturating_mul(c_th.saturating_add(c_ret));
                }
                _ => {}
            }
            if through == 0 {
                break;
            }
        }
        (through, returned)
    }
    let (through, returned) = seq(program, &program.entry().body);
    through.saturating_add(returned)
}

enum BlockExit {
    FellThrough,
    Returned(Option<ValueId>),
}

struct Run<'p> {
    program: &'p Program,
    decisions: Vec<bool>,
    next_decision: usize,
    steps: Vec<PathStep>,
    facts: BTreeMap<ValueId, ValueFacts>,
}

type Env = BTreeMap<String, ValueId>;

impl<'p> Run<'p> {
    fn record(&mut self, stmt: &Statement, context: &[u32], call: Option<CallStep>) {
        self.steps.push(PathStep {
            statement_id: stmt.id,
            location: self.program.location(stmt),
            context: context.to_vec(),
            call,
        });
    }

    fn literal_value(&mut self, stmt: &Statement, context: &[u32], slot: u8, lit: &LiteralValue) -> ValueId {
        let v = ValueId::new(stmt.id, context.to_vec(), slot);
        self.facts.entry(v.clone()).or_insert_with(|| ValueFacts {
            literals: Some([lit.clone()].into()),
            types: [lit.type_name().to_string()].into(),
        });
        v
    }

    /// Opaque value: no literals, no types. Used for call results of
    /// untracked shapes and for reads of never-assigned variables.
    fn opaque_value(&mut self, stmt: &Statement, context: &[u32], slot: u8) -> ValueId {
        let v = ValueId::new(stmt.id, context.to_vec(), slot);
        self.facts.entry(v.clone()).or_default();
        v
    }

    fn resolve_arg(
        &mut self,
        env: &Env,
        stmt: &Statement,
        context: &[u32],
        index: usize,
        arg: &Arg,
    ) -> ValueId {
        match arg {
            Arg::Literal(lit) => self.literal_value(stmt, context, (index + 1) as u8, lit),
            Arg::Var(name) => match env.get(name) {
                Some(v) => v.clone(),
                None => self.opaque_value(stmt, context, (index + 1) as u8),
            },
        }
    }

    fn resolve_args(
        &mut self,
        env: &Env,
        stmt: &Statement,
        context: &[u32],
        args: &[Arg],
    ) -> Vec<ValueId> {
        args.iter()
            .enumerate()
            .map(|(i, a)| self.resolve_arg(env, stmt, context, i, a))
            .collect()
    }

    fn typed_result(&mut self, stmt: &Statement, context: &[u32], type_name: Option<&str>) -> ValueId {
        let v = ValueId::new(stmt.id, context.to_vec(), 0);
        let facts = ValueFacts {
            literals: None,
            types: type_name.map(|t| t.to_string()).into_iter().collect(),
        };
        self.facts.insert(v.clone(), facts);
        v
    }

    fn exec_block(&mut self, stmts: &[Statement], env: &mut Env, context: &[u32]) -> BlockExit {
        for stmt in stmts {
            match &stmt.kind {
                StatementKind::Assign { var, literal } => {
                    let v = self.literal_value(stmt, context, 0, literal);
                    env.insert(var.clone(), v);
                    self.record(stmt, context, None);
                }
                StatementKind::Copy { var, from } => {
                    let v = match env.get(from) {
                        Some(v) => v.clone(),
                        None => self.opaque_value(stmt, context, 0),
                    };
                    env.insert(var.clone(), v);
                    self.record(stmt, context, None);
                }
                StatementKind::New { var, class, args } => {
                    let args = self.resolve_args(env, stmt, context, args);
                    let result = self.typed_result(stmt, context, Some(class));
                    env.insert(var.clone(), result.clone());
                    self.record(
                        stmt,
                        context,
                        Some(CallStep {
                            kind: CallKind::New,
                            class: Some(class.clone()),
                            receiver: None,
                            method: class.clone(),
                            args,
                            result,
                        }),
                    );
                }
                StatementKind::StaticCall {
                    var,
                    class,
                    method,
                    args,
                } => {
                    let args = self.resolve_args(env, stmt, context, args);
                    let result = self.typed_result(stmt, context, Some(class));
                    if let Some(var) = var {
                        env.insert(var.clone(), result.clone());
                    }
                    self.record(
                        stmt,
                        context,
                        Some(CallStep {
                            kind: CallKind::Static,
                            class: Some(class.clone()),
                            receiver: None,
                            method: method.clone(),
                            args,
                            result,
                        }),
                    );
                }
                StatementKind::InstanceCall {
                    var,
                    receiver,
                    method,
                    args,
                } => {
                    let recv = match env.get(receiver) {
                        Some(v) => v.clone(),
                        None => self.opaque_value(stmt, context, 0),
                    };
                    let args = self.resolve_args(env, stmt, context, args);
                    let result = self.typed_result(stmt, context, None);
                    if let Some(var) = var {
                        env.insert(var.clone(), result.clone());
                    }
                    self.record(
                        stmt,
                        context,
                        Some(CallStep {
                            kind: CallKind::Instance,
                            class: None,
                            receiver: Some(recv),
                            method: method.clone(),
                            args,
                            result,
                        }),
                    );
                }
                StatementKind::UserCall {
                    var,
                    function,
                    args,
                } => {
                    let arg_values = self.resolve_args(env, stmt, context, args);
                    self.record(stmt, context, None);
                    let callee: &FunctionDef = &self.program.functions[function];
                    let mut callee_env: Env = callee
                        .params
                        .iter()
                        .cloned()
                        .zip(arg_values)
                        .collect();
                    let mut callee_context = context.to_vec();
                    callee_context.push(stmt.id);
                    let exit = self.exec_block(callee.body.as_slice(), &mut callee_env, &callee_context);
                    if let Some(var) = var {
                        let v = match exit {
                            BlockExit::Returned(Some(v)) => v,
                            _ => self.opaque_value(stmt, context, 0),
                        };
                        env.insert(var.clone(), v);
                    }
                }
                StatementKind::Return { var } => {
                    self.record(stmt, context, None);
                    let v = env.get(var).cloned();
                    return BlockExit::Returned(v);
                }
                StatementKind::Branch {
                    then_block,
                    else_block,
                } => {
                    self.record(stmt, context, None);
                    let take_then = if self.next_decision < self.decisions.len() {
                        self.decisions[self.next_decision]
                    } else {
                        self.decisions.push(true);
                        true
                    };
                    self.next_decision += 1;
                    let arm = if take_then { then_block } else { else_block };
                    match self.exec_block(arm, env, context) {
                        BlockExit::FellThrough => {}
                        returned => return returned,
                    }
                }
            }
        }
        BlockExit::FellThrough
    }
}

/// Enumerates every execution path through inlined `main`, then-arm first,
/// in deterministic order.
pub fn enumerate_paths(
    program: &Program,
    max_paths: usize,
) -> Result<Vec<ExecutionPath>, PathBudgetExceeded> {
    let product = path_product(program);
    if product > max_paths as u128 {
        return Err(PathBudgetExceeded {
            product,
            bound: max_paths,
        });
    }

    let mut paths = Vec::new();
    let mut decisions: Vec<bool> = Vec::new();
    loop {
        let mut run = Run {
            program,
            decisions: std::mem::take(&mut decisions),
            next_decision: 0,
            steps: Vec::new(),
            facts: BTreeMap::new(),
        };
        let mut env = Env::new();
        run.exec_block(&program.entry().body, &mut env, &[]);
        let used = run.next_decision;
        decisions = run.decisions;
        decisions.truncate(used);
        paths.push(ExecutionPath {
            id: paths.len(),
            steps: run.steps,
            facts: run.facts,
        });

        // Backtrack: flip the deepest remaining then-decision to else.
        while decisions.last() == Some(&false) {
            decisions.pop();
        }
        match decisions.last_mut() {
            Some(last) => *last = false,
            None => break,
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::{parse_program, Extraction};

    fn paths_of(text: &str) -> Vec<ExecutionPath> {
        let program = parse_program("t.mprog", text).unwrap();
        enumerate_paths(&program, 4096).unwrap()
    }

    #[test]
    fn straight_line_is_one_path() {
        let paths = paths_of("fun main() { a = 1; b = a; }");
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].steps.len(), 2);
    }

    #[test]
    fn two_branches_make_four_paths() {
        let text = "fun main() { if { a = 1; } else { a = 2; } if { b = 1; } else { b = 2; } }";
        let paths = paths_of(text);
        assert_eq!(paths.len(), 4);
        // then-first, left-to-right order
        let choices: Vec<Vec<u32>> = paths
            .iter()
            .map(|p| {
                p.steps
                    .iter()
                    .filter(|s| s.call.is_none() && s.statement_id != 1 && s.statement_id != 4)
                    .map(|s| s.statement_id)
                    .collect()
            })
            .collect();
        assert_eq!(
            choices,
            vec![vec![2, 5], vec![2, 6], vec![3, 5], vec![3, 6]]
        );
    }

    #[test]
    fn nested_branches_enumerate_three_paths() {
        let text = "fun main() { if { if { a = 1; } else { a = 2; } } else { a = 3; } }";
        let paths = paths_of(text);
        assert_eq!(paths.len(), 3);
        assert_eq!(path_product(&parse_program("t.mprog", text).unwrap()), 3);
    }

    #[test]
    fn budget_is_enforced_with_product() {
        let text = "fun main() { if { a = 1; } else { a = 2; } if { b = 1; } else { b = 2; } }";
        let program = parse_program("t.mprog", text).unwrap();
        let err = enumerate_paths(&program, 3).unwrap_err();
        assert_eq!(err.product, 4);
        assert_eq!(err.bound, 3);
    }

    #[test]
    fn return_binds_caller_to_callee_value() {
        let text = r#"
fun make() {
    k = new Key("x");
    return k;
}
fun main() {
    v = make();
    v.use();
}
"#;
        let paths = paths_of(text);
        assert_eq!(paths.len(), 1);
        let path = &paths[0];
        // The creation inside make() and the receiver at v.use() share identity.
        let new_step = path
            .steps
            .iter()
            .find(|s| s.call.as_ref().is_some_and(|c| c.kind == CallKind::New))
            .unwrap();
        let use_step = path
            .steps
            .iter()
            .find(|s| s.call.as_ref().is_some_and(|c| c.kind == CallKind::Instance))
            .unwrap();
        let created = &new_step.call.as_ref().unwrap().result;
        let receiver = use_step.call.as_ref().unwrap().receiver.as_ref().unwrap();
        assert_eq!(created, receiver);
        assert!(!new_step.context.is_empty());
        assert!(use_step.context.is_empty());
    }

    #[test]
    fn literals_flow_through_user_calls() {
        let text = r#"
fun hash(password) {
    d = new Digest(password);
    return d;
}
fun main() {
    pw = "secret";
    h = hash(pw);
}
"#;
        let paths = paths_of(text);
        let path = &paths[0];
        let digest_args = path
            .steps
            .iter()
            .find_map(|s| s.call.as_ref().filter(|c| c.kind == CallKind::New))
            .unwrap()
            .args
            .clone();
        match path.extract_literals(&digest_args[0]) {
            Extraction::Literals(lits) => {
                assert_eq!(lits.len(), 1);
                assert!(lits.contains(&LiteralValue::Str("secret".into())));
            }
            Extraction::Unknown => panic!("literal must reach the callee parameter"),
        }
    }

    #[test]
    fn call_results_are_unknown() {
        let text = "fun main() { x = new Spec(\"a\"); y = x.weird(); }";
        let paths = paths_of(text);
        let path = &paths[0];
        let spec = path.steps[0].call.as_ref().unwrap().result.clone();
        assert!(path.extract_literals(&spec).is_unknown());
        assert_eq!(path.static_type(&spec), ["Spec".to_string()].into());
        let weird = path.steps[1].call.as_ref().unwrap().result.clone();
        assert!(path.extract_literals(&weird).is_unknown());
        assert!(path.static_type(&weird).is_empty());
    }

    #[test]
    fn literal_kinds_have_types() {
        let text = "fun main() { b = bytes(\"123456\"); s = \"x\"; n = 7; }";
        let paths = paths_of(text);
        let path = &paths[0];
        let ids: Vec<ValueId> = path.steps.iter().map(|s| ValueId::new(s.statement_id, vec![], 0)).collect();
        assert_eq!(path.static_type(&ids[0]), ["Bytes".to_string()].into());
        assert_eq!(path.static_type(&ids[1]), ["String".to_string()].into());
        assert_eq!(path.static_type(&ids[2]), ["Int".to_string()].into());
    }

    #[test]
    fn inlined_statement_multiset_matches_body() {
        let text = r#"
fun helper() {
    a = 1;
    b = 2;
    return b;
}
fun main() {
    x = helper();
    y = x;
}
"#;
        let program = parse_program("t.mprog", text).unwrap();
        let paths = enumerate_paths(&program, 16).unwrap();
        assert_eq!(paths.len(), 1);
        let mut executed: Vec<u32> = paths[0].steps.iter().map(|s| s.statement_id).collect();
        executed.sort_unstable();
        // every statement of both functions executes exactly once
        assert_eq!(executed, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn copies_preserve_identity() {
        let text = "fun main() { a = \"v\"; b = a; c = b; }";
        let paths = paths_of(text);
        let path = &paths[0];
        // all copies resolve to the value created at statement 1
        let a = ValueId::new(1, vec![], 0);
        match path.extract_literals(&a) {
            Extraction::Literals(l) => assert!(l.contains(&LiteralValue::Str("v".into()))),
            Extraction::Unknown => panic!(),
        }
        // only one value carries facts besides none: copies minted nothing new
        assert_eq!(path.facts().len(), 1);
    }
}

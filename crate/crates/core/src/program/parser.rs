//! Recursive-descent parser and validation for `.mprog` documents.

use std::collections::{BTreeMap, BTreeSet};

use crate::lex::{lex, Cursor, Tok};
use crate::model::LiteralValue;

use super::{Arg, FunctionDef, Program, Statement, StatementKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProgramError {
    #[error("{file}:{line}:{col}: syntax error: {message}")]
    Syntax {
        file: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{file}: duplicate function `{name}`")]
    DuplicateFunction { file: String, name: String },
    #[error("{file}: no `main` function")]
    MissingMain { file: String },
    #[error("{file}: recursion is not allowed (cycle: {})", cycle.join(" -> "))]
    Recursion { file: String, cycle: Vec<String> },
    #[error("{file}:{line}: call to unknown function `{name}`")]
    UnknownFunction {
        file: String,
        name: String,
        line: u32,
    },
    #[error("{file}:{line}: `{function}` takes {expected} argument(s), {found} given")]
    ArityMismatch {
        file: String,
        function: String,
        expected: usize,
        found: usize,
        line: u32,
    },
}

struct Parser {
    file: String,
    cur: Cursor,
    next_id: u32,
}

fn is_type_name(w: &str) -> bool {
    w.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

impl Parser {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ProgramError> {
        let at = self.cur.peek();
        Err(ProgramError::Syntax {
            file: self.file.clone(),
            line: at.line,
            col: at.col,
            message: message.into(),
        })
    }

    fn expect_sym(&mut self, sym: &'static str) -> Result<(), ProgramError> {
        if self.cur.eat_sym(sym) {
            Ok(())
        } else {
            self.err(format!("expected `{sym}`, found {}", self.cur.peek().tok))
        }
    }

    fn word(&mut self, what: &str) -> Result<String, ProgramError> {
        match self.cur.peek().tok.clone() {
            Tok::Word(w) => {
                self.cur.next();
                Ok(w)
            }
            other => self.err(format!("expected {what}, found {other}")),
        }
    }

    fn fresh_id(&mut self) -> u32 {
        self.next_id += 1;
        self.next_id
    }

    fn literal(&mut self) -> Result<LiteralValue, ProgramError> {
        match self.cur.peek().tok.clone() {
            Tok::Str(s) => {
                self.cur.next();
                Ok(LiteralValue::Str(s))
            }
            Tok::Int(i) => {
                self.cur.next();
                Ok(LiteralValue::Int(i))
            }
            Tok::Word(w) if w == "bytes" => {
                self.cur.next();
                self.expect_sym("(")?;
                let s = match self.cur.peek().tok.clone() {
                    Tok::Str(s) => {
                        self.cur.next();
                        s
                    }
                    other => return self.err(format!("expected string in bytes(), found {other}")),
                };
                self.expect_sym(")")?;
                Ok(LiteralValue::Bytes(s))
            }
            other => self.err(format!("expected literal, found {other}")),
        }
    }

    fn at_literal(&self) -> bool {
        match &self.cur.peek().tok {
            Tok::Str(_) | Tok::Int(_) => true,
            Tok::Word(w) if w == "bytes" => matches!(self.cur.peek2().tok, Tok::Sym("(")),
            _ => false,
        }
    }

    fn args(&mut self) -> Result<Vec<Arg>, ProgramError> {
        self.expect_sym("(")?;
        let mut out = Vec::new();
        if !self.cur.at_sym(")") {
            loop {
                if self.at_literal() {
                    out.push(Arg::Literal(self.literal()?));
                } else {
                    out.push(Arg::Var(self.word("argument")?));
                }
                if !self.cur.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        Ok(out)
    }

    /// Call form after the leading word has been consumed.
    fn call_after_word(
        &mut self,
        var: Option<String>,
        head: String,
    ) -> Result<StatementKind, ProgramError> {
        if self.cur.eat_sym(".") {
            let method = self.word("method name")?;
            let args = self.args()?;
            if is_type_name(&head) {
                Ok(StatementKind::StaticCall {
                    var,
                    class: head,
                    method,
                    args,
                })
            } else {
                Ok(StatementKind::InstanceCall {
                    var,
                    receiver: head,
                    method,
                    args,
                })
            }
        } else if self.cur.at_sym("(") {
            let args = self.args()?;
            Ok(StatementKind::UserCall {
                var,
                function: head,
                args,
            })
        } else {
            self.err(format!(
                "expected `.` or `(` after `{head}`, found {}",
                self.cur.peek().tok
            ))
        }
    }

    fn statement(&mut self) -> Result<Statement, ProgramError> {
        let line = self.cur.peek().line;
        let id = self.fresh_id();

        if self.cur.at_word("return") && !matches!(self.cur.peek2().tok, Tok::Sym("=")) {
            self.cur.next();
            let var = self.word("variable name")?;
            self.expect_sym(";")?;
            return Ok(Statement {
                id,
                line,
                kind: StatementKind::Return { var },
            });
        }

        if self.cur.at_word("if") && matches!(self.cur.peek2().tok, Tok::Sym("{")) {
            self.cur.next();
            let then_block = self.block()?;
            if !self.cur.eat_word("else") {
                return self.err("expected `else` after if-block");
            }
            let else_block = self.block()?;
            return Ok(Statement {
                id,
                line,
                kind: StatementKind::Branch {
                    then_block,
                    else_block,
                },
            });
        }

        let head = self.word("statement")?;
        if self.cur.eat_sym("=") {
            if !is_type_name(&head) && head != "_" {
                // assignment target
            } else {
                return self.err(format!("cannot assign to `{head}`"));
            }
            let var = head;
            // expr := literal | ident | new T(args) | callExpr
            if self.cur.eat_word("new") {
                let class = self.word("class name")?;
                if !is_type_name(&class) {
                    return self.err(format!("class name must start upper-case: `{class}`"));
                }
                let args = self.args()?;
                self.expect_sym(";")?;
                return Ok(Statement {
                    id,
                    line,
                    kind: StatementKind::New { var, class, args },
                });
            }
            if self.at_literal() {
                let literal = self.literal()?;
                self.expect_sym(";")?;
                return Ok(Statement {
                    id,
                    line,
                    kind: StatementKind::Assign { var, literal },
                });
            }
            let rhs = self.word("expression")?;
            if self.cur.at_sym(".") || self.cur.at_sym("(") {
                let kind = self.call_after_word(Some(var), rhs)?;
                self.expect_sym(";")?;
                return Ok(Statement { id, line, kind });
            }
            if is_type_name(&rhs) {
                return self.err(format!("`{rhs}` is a type name, not a variable"));
            }
            self.expect_sym(";")?;
            return Ok(Statement {
                id,
                line,
                kind: StatementKind::Copy { var, from: rhs },
            });
        }

        // Bare call statement.
        let kind = self.call_after_word(None, head)?;
        self.expect_sym(";")?;
        Ok(Statement { id, line, kind })
    }

    fn block(&mut self) -> Result<Vec<Statement>, ProgramError> {
        self.expect_sym("{")?;
        let mut stmts = Vec::new();
        while !self.cur.at_sym("}") {
            if matches!(self.cur.peek().tok, Tok::Eof) {
                return self.err("unterminated block");
            }
            stmts.push(self.statement()?);
        }
        self.expect_sym("}")?;
        Ok(stmts)
    }

    fn function(&mut self) -> Result<FunctionDef, ProgramError> {
        let line = self.cur.peek().line;
        if !self.cur.eat_word("fun") {
            return self.err("expected `fun`");
        }
        let name = self.word("function name")?;
        if is_type_name(&name) {
            return self.err(format!("function name must start lower-case: `{name}`"));
        }
        self.expect_sym("(")?;
        let mut params = Vec::new();
        if !self.cur.at_sym(")") {
            params.push(self.word("parameter")?);
            while self.cur.eat_sym(",") {
                params.push(self.word("parameter")?);
            }
        }
        self.expect_sym(")")?;
        let body = self.block()?;
        Ok(FunctionDef {
            name,
            params,
            body,
            line,
        })
    }
}

fn user_calls<'a>(stmts: &'a [Statement], out: &mut Vec<(&'a str, usize, u32)>) {
    for s in stmts {
        match &s.kind {
            StatementKind::UserCall { function, args, .. } => {
                out.push((function, args.len(), s.line));
            }
            StatementKind::Branch {
                then_block,
                else_block,
            } => {
                user_calls(then_block, out);
                user_calls(else_block, out);
            }
            _ => {}
        }
    }
}

fn check_recursion(file: &str, program: &Program) -> Result<(), ProgramError> {
    // DFS over the user-call graph; grey nodes on the stack mean a cycle.
    fn visit(
        program: &Program,
        name: &str,
        stack: &mut Vec<String>,
        done: &mut BTreeSet<String>,
    ) -> Option<Vec<String>> {
        if let Some(pos) = stack.iter().position(|n| n == name) {
            let mut cycle = stack[pos..].to_vec();
            cycle.push(name.to_string());
            return Some(cycle);
        }
        if done.contains(name) {
            return None;
        }
        stack.push(name.to_string());
        let mut calls = Vec::new();
        user_calls(&program.functions[name].body, &mut calls);
        for (callee, _, _) in calls {
            if program.functions.contains_key(callee) {
                if let Some(cycle) = visit(program, callee, stack, done) {
                    return Some(cycle);
                }
            }
        }
        stack.pop();
        done.insert(name.to_string());
        None
    }

    let mut done = BTreeSet::new();
    for name in program.functions.keys() {
        let mut stack = Vec::new();
        if let Some(cycle) = visit(program, name, &mut stack, &mut done) {
            return Err(ProgramError::Recursion {
                file: file.to_string(),
                cycle,
            });
        }
    }
    Ok(())
}

/// Parses and validates an `.mprog` document.
pub fn parse_program(file: &str, text: &str) -> Result<Program, ProgramError> {
    let toks = lex(text).map_err(|e| ProgramError::Syntax {
        file: file.to_string(),
        line: e.line,
        col: e.col,
        message: e.message,
    })?;
    let mut p = Parser {
        file: file.to_string(),
        cur: Cursor::new(toks),
        next_id: 0,
    };

    let mut functions = BTreeMap::new();
    let mut function_order = Vec::new();
    while !matches!(p.cur.peek().tok, Tok::Eof) {
        let f = p.function()?;
        if functions.contains_key(&f.name) {
            return Err(ProgramError::DuplicateFunction {
                file: file.to_string(),
                name: f.name,
            });
        }
        function_order.push(f.name.clone());
        functions.insert(f.name.clone(), f);
    }
    if !functions.contains_key("main") {
        return Err(ProgramError::MissingMain {
            file: file.to_string(),
        });
    }

    let program = Program {
        file: file.to_string(),
        statement_count: p.next_id,
        functions,
        function_order,
    };

    // Cross-reference checks: known callees with matching arity.
    for f in program.functions.values() {
        let mut calls = Vec::new();
        user_calls(&f.body, &mut calls);
        for (callee, arity, line) in calls {
            match program.functions.get(callee) {
                None => {
                    return Err(ProgramError::UnknownFunction {
                        file: file.to_string(),
                        name: callee.to_string(),
                        line,
                    })
                }
                Some(def) if def.params.len() != arity => {
                    return Err(ProgramError::ArityMismatch {
                        file: file.to_string(),
                        function: callee.to_string(),
                        expected: def.params.len(),
                        found: arity,
                        line,
                    })
                }
                Some(_) => {}
            }
        }
    }
    check_recursion(file, &program)?;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_statement_shapes() {
        let text = r#"
fun helper(x) {
    y = x;
    return y;
}
fun main() {
    a = "lit";
    b = bytes("00ff");
    n = 5;
    o = new Widget(a, 7);
    s = Widget.make(a);
    t = o.spin();
    u = helper(b);
    o.stop();
    if {
        c = a;
    } else {
        c = b;
    }
}
"#;
        let p = parse_program("t.mprog", text).unwrap();
        assert_eq!(p.functions.len(), 2);
        assert_eq!(p.all_statements().len(), 13);
        assert_eq!(p.statement_count, 13);
    }

    #[test]
    fn missing_main_is_rejected() {
        let err = parse_program("t.mprog", "fun other() { x = 1; }").unwrap_err();
        assert!(matches!(err, ProgramError::MissingMain { .. }));
        let err = parse_program("t.mprog", "").unwrap_err();
        assert!(matches!(err, ProgramError::MissingMain { .. }));
    }

    #[test]
    fn self_recursion_is_rejected() {
        let text = "fun main() { x = loop(); }\nfun loop() { y = loop(); return y; }";
        let err = parse_program("t.mprog", text).unwrap_err();
        match err {
            ProgramError::Recursion { cycle, .. } => {
                assert!(cycle.contains(&"loop".to_string()));
            }
            other => panic!("expected recursion error, got {other:?}"),
        }
    }

    #[test]
    fn mutual_recursion_is_rejected() {
        let text = "fun main() { x = a(); }\nfun a() { y = b(); return y; }\nfun b() { z = a(); return z; }";
        let err = parse_program("t.mprog", text).unwrap_err();
        assert!(matches!(err, ProgramError::Recursion { .. }));
    }

    #[test]
    fn duplicate_function_is_rejected() {
        let text = "fun main() { x = 1; }\nfun main() { y = 2; }";
        let err = parse_program("t.mprog", text).unwrap_err();
        assert!(matches!(err, ProgramError::DuplicateFunction { name, .. } if name == "main"));
    }

    #[test]
    fn unknown_function_and_arity() {
        let err = parse_program("t.mprog", "fun main() { x = nope(); }").unwrap_err();
        assert!(matches!(err, ProgramError::UnknownFunction { name, .. } if name == "nope"));

        let text = "fun main() { x = f(1, 2); }\nfun f(a) { return a; }";
        let err = parse_program("t.mprog", text).unwrap_err();
        assert!(matches!(
            err,
            ProgramError::ArityMismatch {
                expected: 1,
                found: 2,
                ..
            }
        ));
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_program("t.mprog", "fun main() {\n  x = ;\n}").unwrap_err();
        match err {
            ProgramError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn statement_ids_are_textual_order() {
        let text = "fun main() {\n a = 1;\n if {\n b = 2;\n } else {\n c = 3;\n }\n d = 4;\n}";
        let p = parse_program("t.mprog", text).unwrap();
        let ids: Vec<u32> = p.all_statements().iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![1, 2, 3, 4, 5]);
    }
}

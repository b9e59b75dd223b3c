//! 3-SAT formulas and the DIMACS CNF format.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3-SAT formula. Literals are nonzero integers, `-x` meaning "not x".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    pub v: usize,
    pub clauses: Vec<[i32; 3]>,
}

impl CnfFormula {
    pub fn new(v: usize, clauses: Vec<[i32; 3]>) -> Result<Self> {
        let f = CnfFormula { v, clauses };
        f.validate()?;
        Ok(f)
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, clause) in self.clauses.iter().enumerate() {
            for &lit in clause {
                if lit == 0 || lit.unsigned_abs() as usize > self.v {
                    return Err(Error::InvalidArgument(format!(
                        "clause {k}: literal {lit} outside 1..={}",
                        self.v
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn parse_dimacs(text: &str) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut clauses = Vec::new();
        let mut current: Vec<i32> = Vec::new();
        let mut current_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            // SATLIB files end with a "%" line followed by a stray "0".
            if line.starts_with('%') {
                break;
            }
            if line.starts_with('p') {
                let fields: Vec<&str> = line.split_whitespace().collect();
                if fields.len() != 4 || fields[1] != "cnf" {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: "expected `p cnf <vars> <clauses>`".into(),
                    });
                }
                let parse = |s: &str| {
                    s.parse::<usize>().map_err(|e| Error::Parse {
                        line: line_no,
                        msg: e.to_string(),
                    })
                };
                header = Some((parse(fields[2])?, parse(fields[3])?));
                continue;
            }
            let (v, _) = header.ok_or(Error::Parse {
                line: line_no,
                msg: "clause before header".into(),
            })?;
            for token in line.split_whitespace() {
                let lit: i32 = token.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("bad literal `{token}`"),
                })?;
                if current.is_empty() {
                    current_line = line_no;
                }
                if lit == 0 {
                    let clause: [i32; 3] = current.as_slice().try_into().map_err(|_| Error::Parse {
                        line: current_line,
                        msg: format!("clause has {} literals, expected 3", current.len()),
                    })?;
                    clauses.push(clause);
                    current.clear();
                } else {
                    if lit.unsigned_abs() as usize > v {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!("literal {lit} exceeds {v} variables"),
                        });
                    }
                    current.push(lit);
                }
            }
        }
        let (v, c) = header.ok_or(Error::Parse {
            line: 0,
            msg: "missing header".into(),
        })?;
        if !current.is_empty() {
            return Err(Error::Parse {
                line: current_line,
                msg: "unterminated clause".into(),
            });
        }
        if clauses.len() != c {
            return Err(Error::Parse {
                line: 0,
                msg: format!("header declares {c} clauses, found {}", clauses.len()),
            });
        }
        Ok(CnfFormula { v, clauses })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse_dimacs(&std::fs::read_to_string(path)?)
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.v, self.clauses.len());
        for [a, b, c] in &self.clauses {
            writeln!(out, "{a} {b} {c} 0").unwrap();
        }
        out
    }

    /// Number of clauses with at least one true literal; `assignment[x - 1]`
    /// is the value of variable `x`.
    pub fn satisfied_clauses(&self, assignment: &[bool]) -> usize {
        self.clauses
            .iter()
            .filter(|clause| clause.iter().any(|&lit| literal_value(lit, assignment)))
            .count()
    }

    pub fn is_satisfied(&self, assignment: &[bool]) -> bool {
        self.satisfied_clauses(assignment) == self.clauses.len()
    }

    /// Exhaustive search for a satisfying assignment (small `v` only).
    pub fn brute_force_solution(&self) -> Result<Option<Vec<bool>>> {
        if self.v > 30 {
            return Err(Error::TooManyFreeNodes {
                free: self.v,
                limit: 30,
            });
        }
        let mut assignment = vec![false; self.v];
        for bits in 0u64..1 << self.v {
            for (x, slot) in assignment.iter_mut().enumerate() {
                *slot = bits >> x & 1 == 1;
            }
            if self.is_satisfied(&assignment) {
                return Ok(Some(assignment));
            }
        }
        Ok(None)
    }

    /// Uniform random 3-SAT: each clause picks three distinct variables and
    /// independent random signs.
    pub fn random<R: Rng + ?Sized>(v: usize, c: usize, rng: &mut R) -> Result<Self> {
        if v < 3 {
            return Err(Error::InvalidArgument("random 3-SAT needs v >= 3".into()));
        }
        let clauses = (0..c)
            .map(|_| {
                let vars = sample(rng, v, 3);
                let mut clause = [0i32; 3];
                for (slot, x) in clause.iter_mut().zip(vars.iter()) {
                    let lit = x as i32 + 1;
                    *slot = if rng.gen::<bool>() { lit } else { -lit };
                }
                clause
            })
            .collect();
        Ok(CnfFormula { v, clauses })
    }
}

#[inline]
pub fn literal_value(lit: i32, assignment: &[bool]) -> bool {
    let value = assignment[lit.unsigned_abs() as usize - 1];
    if lit > 0 {
        value
    } else {
        !value
    }
}

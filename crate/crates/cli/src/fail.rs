//! Exit-code discipline: 0 success, 1 usage, 2 data/config, 3 numeric.
//!
//! Every failure prints one machine-parsable line
//! (`error[<class>]: <reason>`) followed by optional indented human
//! detail.

use dnr_core::Error;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub class: &'static str,
    pub reason: String,
    pub detail: String,
}

impl Failure {
    pub fn usage(reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Failure {
            code: 1,
            class: "usage",
            reason: reason.into(),
            detail: detail.into(),
        }
    }

    pub fn config(reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Failure {
            code: 2,
            class: "config",
            reason: reason.into(),
            detail: detail.into(),
        }
    }

    pub fn data(reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Failure {
            code: 2,
            class: "data",
            reason: reason.into(),
            detail: detail.into(),
        }
    }

    pub fn numeric(reason: impl Into<String>, detail: impl Into<String>) -> Self {
        Failure {
            code: 3,
            class: "numeric",
            reason: reason.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Failure::data(format!("io error on {}", path.display()), err.to_string())
    }

    /// The full stderr rendering.
    pub fn render(&self) -> String {
        let mut out = format!("error[{}]: {}", self.class, self.reason.replace('\n', " "));
        if !self.detail.is_empty() {
            for line in self.detail.lines() {
                out.push_str("\n  ");
                out.push_str(line);
            }
        }
        out
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        match &err {
            Error::Numeric(_) | Error::Convergence { .. } => {
                Failure::numeric(err.to_string(), source_chain(&err))
            }
            _ => Failure::data(err.to_string(), source_chain(&err)),
        }
    }
}

fn source_chain(err: &Error) -> String {
    use std::error::Error as _;
    let mut out = String::new();
    let mut cur: Option<&(dyn std::error::Error + 'static)> = err.source();
    while let Some(e) = cur {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("caused by: {e}"));
        cur = e.source();
    }
    out
}

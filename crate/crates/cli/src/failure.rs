use serde::Serialize;

/// A command failure, split by who is at fault.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, missing or malformed inputs. Exit code 2.
    Input(String),
    /// Everything else. Exit code 1.
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: &'a str,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Failure::Internal(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Internal(_) => 1,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, message) = match self {
            Failure::Input(m) => ("bad_input", m),
            Failure::Internal(m) => ("internal", m),
        };
        serde_json::to_string(&ErrorJson {
            error: ErrorBody { kind, message },
        })
        .expect("error json")
    }
}

impl From<pweaver_core::Error> for Failure {
    fn from(e: pweaver_core::Error) -> Self {
        if e.is_bad_input() {
            Failure::Input(e.to_string())
        } else {
            Failure::Internal(e.to_string())
        }
    }
}

use std::fmt;

/// A failure reported as a single `error: <category>: <message>` line.
#[derive(Debug)]
pub struct Failure {
    category: &'static str,
    message: String,
}

impl Failure {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.message = format!("{ctx}: {}", self.message);
        self
    }

    pub fn exit_code(&self) -> u8 {
        match self.category {
            "usage" => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = self.message.replace('\n', " ");
        write!(f, "error: {}: {}", self.category, message)
    }
}

impl From<pdiag::Error> for Failure {
    fn from(e: pdiag::Error) -> Self {
        use pdiag::Error::*;
        let category = match &e {
            InvalidParameter(_) | InvalidScale(_) => "usage",
            Malformed { .. } | OffScaleAt { .. } | UnknownItems(_) | UnknownAction(_) | NoRatings | Csv(_) => "input",
            Io(_) => "io",
            _ => "model",
        };
        Self::new(category, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

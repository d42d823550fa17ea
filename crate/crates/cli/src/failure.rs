use std::fmt;

use fieldmap_core::Error;

/// Process outcome other than success, mapped onto the exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or an invalid configuration value.
    Usage(String),
    /// Missing, unreadable or malformed input data.
    Input(String),
    /// Some tiles failed; the manifest lists them for a retry.
    Partial { failed: Vec<String>, manifest: std::path::PathBuf },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Partial { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Usage(_) => "usage",
            Failure::Input(_) => "input",
            Failure::Partial { .. } => "partial",
        }
    }

    /// One JSON line for stderr.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::json!({ "error": self.kind(), "message": self.to_string() });
        if let Failure::Partial { failed, manifest } = self {
            v["failed_tiles"] = serde_json::json!(failed);
            v["manifest"] = serde_json::json!(manifest);
        }
        v.to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Input(m) => f.write_str(m),
            Failure::Partial { failed, manifest } => write!(
                f,
                "{} tile(s) failed: {}; rerun to resume from {}",
                failed.len(),
                failed.join(", "),
                manifest.display()
            ),
        }
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnsupportedCrs(_) => Failure::Usage(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(Failure::Usage("x".into()).exit_code(), 1);
        assert_eq!(Failure::from(Error::EmptyRegion).exit_code(), 2);
        let p = Failure::Partial { failed: vec!["t1".into()], manifest: "m.json".into() };
        assert_eq!(p.exit_code(), 3);
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        assert_eq!(v["error"], "partial");
        assert_eq!(v["failed_tiles"][0], "t1");
    }
}

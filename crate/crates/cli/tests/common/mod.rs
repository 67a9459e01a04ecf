//! Helpers shared by the binary-level test targets.

#![allow(dead_code)]

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

pub const TRAIN_CSV: &str = "PairID,Sentence1,Sentence2,Score
t01,the cat sat on the mat,the cat sat on the mat,1.0
t02,the cat sat on the mat,a dog ran in the park,0.05
t03,red apples fall from trees,red apples drop from trees,0.8
t04,birds sing loudly at dawn,fish swim quietly at night,0.1
t05,a dog ran in the park,the dog ran through the park,0.85
t06,cold rain falls today,cold rain fell again today,0.7
t07,he reads a long book,she reads a short book,0.6
t08,the market opens early,stock prices rose sharply,0.15
t09,children play in the garden,kids play in the garden,0.9
t10,the train leaves at noon,a plane lands at midnight,0.2
t11,we cooked pasta for dinner,we cooked rice for dinner,0.65
t12,the river flows to the sea,mountains rise above the clouds,0.1
";

pub const DEV_CSV: &str = "PairID,Sentence1,Sentence2,Score
d1,the cat sat on the rug,the cat sat on the mat,0.9
d2,birds sing at dawn,the market opens early,0.05
d3,kids play in the park,children play in the park,0.85
d4,we cooked soup for lunch,the train leaves at noon,0.1
d5,red apples fall,green apples fall,0.7
d6,a long book,a short book,0.55
";

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn error(&self) -> Value {
        serde_json::from_str(self.stderr.trim())
            .unwrap_or_else(|e| panic!("stderr is not one JSON object ({e}): {}", self.stderr))
    }

    pub fn summary(&self) -> Value {
        serde_json::from_str(self.stdout.trim())
            .unwrap_or_else(|e| panic!("stdout is not one JSON object ({e}): {}", self.stdout))
    }

    #[track_caller]
    pub fn ok(self) -> Self {
        assert_eq!(self.code, 0, "stdout: {}\nstderr: {}", self.stdout, self.stderr);
        self
    }

    /// Asserts the exit code and error kind, returning the error JSON.
    #[track_caller]
    pub fn fails(&self, code: i32, kind: &str) -> Value {
        assert_eq!(self.code, code, "stdout: {}\nstderr: {}", self.stdout, self.stderr);
        let err = self.error();
        assert_eq!(err["kind"], kind, "{err}");
        err
    }
}

/// Runs the `semrel` binary without inheriting the provider URL variable.
pub fn semrel<I, S>(args: I) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    semrel_env(args, &[])
}

pub fn semrel_env<I, S>(args: I, env: &[(&str, &str)]) -> Run
where
    I: IntoIterator<Item = S>,
    S: AsRef<OsStr>,
{
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semrel"));
    cmd.args(args).env_remove("SEMREL_PROVIDER_URL");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("spawn semrel");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).expect("utf-8 stdout"),
        stderr: String::from_utf8(out.stderr).expect("utf-8 stderr"),
    }
}

pub fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    let path = path.as_ref();
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// `(pair_id, score)` rows of a prediction file.
pub fn prediction_rows(path: impl AsRef<Path>) -> Vec<(String, f64)> {
    let text = String::from_utf8(read(path)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("PairID,Pred_Score"));
    lines
        .map(|l| {
            let (id, s) = l.split_once(',').expect("two columns");
            (id.to_string(), s.parse().expect("float score"))
        })
        .collect()
}

/// One JSON-lines embedding cache record for `text`.
pub fn cache_line(model: &str, text: &str, vector: &[f64]) -> String {
    serde_json::json!({
        "key": semrel_core::text_key(text),
        "model": model,
        "vector": vector,
    })
    .to_string()
}

//! CSV assembly: fixed headers, 9 significant digits, LF line endings.

use std::path::Path;

/// Locale-independent float formatting with 9 significant digits.
pub fn fmt(x: f64) -> String {
    format!("{x:.8e}")
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &str) -> Self {
        Self {
            text: format!("{header}\n"),
        }
    }

    pub fn row<I: IntoIterator<Item = String>>(&mut self, fields: I) {
        let joined: Vec<String> = fields.into_iter().collect();
        self.text.push_str(&joined.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// Writes to the file when a path is given, otherwise prints to stdout.
pub fn emit(out: Option<&Path>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            println!("wrote {}", path.display());
        }
        None => print!("{content}"),
    }
    Ok(())
}

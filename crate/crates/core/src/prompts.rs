//! System prompts for the manager and the sub-agents.
//!
//! Defaults are compiled in from `assets/prompts/*.txt`. A prompts directory
//! may override any of them with a file of the same name.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompts {
    pub manager: String,
    pub code_writer: String,
    pub visualiser: String,
    pub table_analyser: String,
    pub plot_analyser: String,
    pub rag: String,
    pub pipeline_reproducer: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            manager: include_str!("../assets/prompts/manager.txt").to_owned(),
            code_writer: include_str!("../assets/prompts/code_writer.txt").to_owned(),
            visualiser: include_str!("../assets/prompts/visualiser.txt").to_owned(),
            table_analyser: include_str!("../assets/prompts/table_analyser.txt").to_owned(),
            plot_analyser: include_str!("../assets/prompts/plot_analyser.txt").to_owned(),
            rag: include_str!("../assets/prompts/rag.txt").to_owned(),
            pipeline_reproducer: include_str!("../assets/prompts/pipeline_reproducer.txt").to_owned(),
        }
    }
}

impl Prompts {
    pub const NAMES: [&'static str; 7] = [
        "manager",
        "code_writer",
        "visualiser",
        "table_analyser",
        "plot_analyser",
        "rag",
        "pipeline_reproducer",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut String> {
        Some(match name {
            "manager" => &mut self.manager,
            "code_writer" => &mut self.code_writer,
            "visualiser" => &mut self.visualiser,
            "table_analyser" => &mut self.table_analyser,
            "plot_analyser" => &mut self.plot_analyser,
            "rag" => &mut self.rag,
            "pipeline_reproducer" => &mut self.pipeline_reproducer,
            _ => return None,
        })
    }

    /// Defaults overridden by `{dir}/{name}.txt` where present.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut p = Self::default();
        for name in Self::NAMES {
            let file = dir.join(format!("{name}.txt"));
            if file.is_file() {
                let text = std::fs::read_to_string(&file)?;
                *p.slot(name).expect("known prompt name") = text;
            }
        }
        Ok(p)
    }

    /// Writes every prompt to `{dir}/{name}.txt` for editing.
    pub fn export(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut copy = self.clone();
        for name in Self::NAMES {
            std::fs::write(dir.join(format!("{name}.txt")), copy.slot(name).expect("known prompt name").as_bytes())?;
        }
        Ok(())
    }
}

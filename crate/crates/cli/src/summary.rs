//! The `summary.txt` ledger of a run.

use ddpmlab::io::fmt17;

#[derive(Clone, Debug, PartialEq)]
pub enum Entry {
    Check { name: String, pass: bool, detail: String },
    Report { name: String, value: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub experiment: String,
    pub entries: Vec<Entry>,
}

impl Summary {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.into(), entries: Vec::new() }
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) -> bool {
        self.entries.push(Entry::Check { name: name.into(), pass, detail: detail.into() });
        pass
    }

    pub fn report(&mut self, name: impl Into<String>, value: f64) {
        self.entries.push(Entry::Report { name: name.into(), value: fmt17(value) });
    }

    pub fn note(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.entries.push(Entry::Report { name: name.into(), value: value.into() });
    }

    pub fn checks(&self) -> impl Iterator<Item = (&str, bool)> {
        self.entries.iter().filter_map(|e| match e {
            Entry::Check { name, pass, .. } => Some((name.as_str(), *pass)),
            Entry::Report { .. } => None,
        })
    }

    pub fn passed(&self) -> bool {
        self.checks().all(|(_, p)| p)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks().filter(|(_, p)| !p).map(|(n, _)| n).collect()
    }

    /// Looks up a check by name.
    pub fn outcome(&self, name: &str) -> Option<bool> {
        self.checks().find(|(n, _)| *n == name).map(|(_, p)| p)
    }

    pub fn render(&self) -> String {
        let mut s = format!("experiment = {}\n", self.experiment);
        for e in &self.entries {
            match e {
                Entry::Check { name, pass, detail } => {
                    let tag = if *pass { "PASS" } else { "FAIL" };
                    s.push_str(&format!("{tag} {name}: {detail}\n"));
                }
                Entry::Report { name, value } => s.push_str(&format!("REPORT {name} = {value}\n")),
            }
        }
        let total = self.checks().count();
        let ok = self.checks().filter(|(_, p)| *p).count();
        let status = if self.passed() { "PASS" } else { "FAIL" };
        s.push_str(&format!("status = {status} ({ok}/{total} assertions passed)\n"));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_lists_everything() {
        let mut s = Summary::new("pde");
        s.check("a", true, "1 <= 2");
        s.report("scale", 0.5);
        s.check("b", false, "3 <= 2");
        let text = s.render();
        assert_eq!(
            text,
            "experiment = pde\nPASS a: 1 <= 2\nREPORT scale = 0.50000000000000000\nFAIL b: 3 <= 2\nstatus = FAIL (1/2 assertions passed)\n"
        );
        assert_eq!(s.failures(), vec!["b"]);
        assert_eq!(s.outcome("a"), Some(true));
    }
}

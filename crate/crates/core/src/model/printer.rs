use std::fmt;

use super::{RateLaw, ReactionNetwork};
use crate::polynomial::format_rational;

fn complex(names: &[String], counts: &[u32]) -> String {
    let terms: Vec<String> = counts
        .iter()
        .enumerate()
        .filter(|(_, &k)| k > 0)
        .map(|(i, &k)| if k == 1 { names[i].clone() } else { format!("{k}*{}", names[i]) })
        .collect();
    if terms.is_empty() {
        "0".into()
    } else {
        terms.join(" + ")
    }
}

/// Prints the network in model-file syntax; parsing the output yields an
/// equal network.
impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = self.species_names();
        let mut i = 0;
        while i < self.species.len() {
            if let Some(group) = self.modes.iter().find(|g| g.species.first() == Some(&i)) {
                let members: Vec<&str> = group.species.iter().map(|&s| names[s].as_str()).collect();
                let tuples: Vec<String> = group
                    .values
                    .iter()
                    .map(|v| format!("({})", v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")))
                    .collect();
                writeln!(f, "modes {} in {{{}}};", members.join(", "), tuples.join(", "))?;
                i += group.species.len();
            } else {
                let start = i;
                while i < self.species.len() && !self.species[i].mode_flag {
                    i += 1;
                }
                writeln!(f, "species {};", names[start..i].join(", "))?;
            }
        }
        for (name, value) in &self.parameters {
            writeln!(f, "param {name} = {};", format_rational(value))?;
        }
        for r in &self.reactions {
            let rate = match &r.rate {
                RateLaw::MassAction(c) => format!("mass_action({})", format_rational(c)),
                RateLaw::Polynomial(p) => format!("rate({})", p.display_with(&names)),
                RateLaw::Custom(c) => format!("rate({})", c.render(&self.species)),
            };
            writeln!(f, "{} -> {} @ {rate};", complex(&names, &r.consume), complex(&names, &r.produce))?;
        }
        if let Some(g) = &self.lyapunov {
            writeln!(f, "lyapunov g = {};", g.display_with(&names))?;
        }
        Ok(())
    }
}

//! Built-in scenarios, embedded from `scenarios/*.toml`.

pub struct Scenario {
    pub name: &'static str,
    pub text: &'static str,
}

pub const SCENARIOS: &[Scenario] = &[
    Scenario {
        name: "fig1a",
        text: include_str!("../scenarios/fig1a.toml"),
    },
    Scenario {
        name: "fig1b",
        text: include_str!("../scenarios/fig1b.toml"),
    },
    Scenario {
        name: "fig2",
        text: include_str!("../scenarios/fig2.toml"),
    },
    Scenario {
        name: "fig3",
        text: include_str!("../scenarios/fig3.toml"),
    },
    Scenario {
        name: "fig4",
        text: include_str!("../scenarios/fig4.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static Scenario> {
    SCENARIOS.iter().find(|s| s.name == name)
}

/// First `description = "..."` line of a scenario.
pub fn description(s: &Scenario) -> &'static str {
    s.text
        .lines()
        .find_map(|l| l.strip_prefix("description = \""))
        .and_then(|l| l.strip_suffix('"'))
        .unwrap_or("")
}

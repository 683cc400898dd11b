use crate::model::{BankProfile, BehavioralProfile};

const SKEPTICISM: [&str; 5] = [
    "are generally trusting",
    "are somewhat trusting",
    "balance trust and skepticism",
    "are somewhat skeptical",
    "are highly skeptical",
];

const LITERALISM: [&str; 5] = [
    "interpret language very flexibly",
    "interpret language flexibly",
    "balance literal and flexible interpretation",
    "interpret language fairly literally",
    "interpret language strictly literally",
];

const EMPATHY: [&str; 5] = [
    "are emotionally detached",
    "are somewhat detached",
    "balance empathy and detachment",
    "are empathetic",
    "are highly empathetic",
];

pub const OBJECTIVE_CLAUSE: &str = "Emphasize objectivity and keep your own opinions in the background.";
pub const BALANCED_CLAUSE: &str =
    "Weigh your own opinions alongside the facts without letting them dominate.";
pub const OPINIONATED_CLAUSE: &str =
    "Use stronger, more opinionated language and let your views shape the answer.";

fn phrase(table: &[&'static str; 5], value: u8) -> &'static str {
    table[usize::from(value.clamp(1, 5) - 1)]
}

pub fn bias_clause(bias_strength: f64) -> &'static str {
    if bias_strength < 1.0 / 3.0 {
        OBJECTIVE_CLAUSE
    } else if bias_strength < 2.0 / 3.0 {
        BALANCED_CLAUSE
    } else {
        OPINIONATED_CLAUSE
    }
}

pub fn disposition(p: &BehavioralProfile) -> String {
    format!(
        "You {}, {}, and {}.",
        phrase(&SKEPTICISM, p.skepticism),
        phrase(&LITERALISM, p.literalism),
        phrase(&EMPATHY, p.empathy)
    )
}

/// System message describing the bank's identity and disposition. Pure
/// function of the profile.
pub fn verbalize_profile(profile: &BankProfile) -> String {
    let mut out = format!("You are {}.", profile.name.trim());
    let background = profile.background.trim();
    if !background.is_empty() {
        out.push_str(" Background: ");
        out.push_str(background);
    }
    out.push(' ');
    out.push_str(&disposition(&profile.profile));
    out.push(' ');
    out.push_str(bias_clause(profile.profile.bias_strength));
    out
}

//! Deterministic synthetic business-call corpus used for demos and tests.
//!
//! Transcripts mention people, companies, phone numbers, e-mail addresses,
//! street addresses and account numbers drawn from the same lexicon the
//! bundled PII detectors use.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Transcript, TranscriptTurn};
use crate::anonymize::lexicon::{COMPANY_NAMES, PERSON_NAMES, STREET_NAMES, STREET_SUFFIXES};
use crate::text::keyed_rng;

const INDUSTRIES: &[&str] = &[
    "insurance",
    "software",
    "logistics",
    "healthcare",
    "banking",
    "real estate",
    "telecom",
    "home renovation",
    "translation services",
    "hospitality",
];

const PRODUCTS: &[&str] = &[
    "premium support plan",
    "fleet tracking module",
    "renovation package",
    "annual subscription",
    "analytics dashboard",
    "extended warranty",
    "fireplace installation",
    "billing integration",
];

const DAYS: &[&str] = &["Monday", "Tuesday", "Wednesday", "Thursday", "Friday"];

const OPENING: &[&str] = &[
    "Hi, this is {rep} from {company}, am I speaking with {client}?",
    "Good morning, thanks for calling {company}, my name is {rep}.",
    "Hello {client}, it's {rep} with {company}, do you have a few minutes?",
];

const CLIENT_REPLY: &[&str] = &[
    "Yes, this is {client}. I was hoping to talk about the {product}.",
    "Hi {rep}, thanks for getting back to me about the {product}.",
    "Sure, I have some time now. We have questions about the {product}.",
];

const MIDDLE: &[&str] = &[
    "Can you confirm the account number on file? I have {account}.",
    "The best number to reach me is {phone}, that's my direct line.",
    "Please send the documents to {email} when they're ready.",
    "Our office moved to {address} last month, so please update that.",
    "The {product} would cost about {price} dollars per month for your team.",
    "We compared it with what {company} offered us last year and the pricing was higher.",
    "I can schedule the onboarding for {day} at {hour} PM if that works for you.",
    "My manager {person} will need to approve the budget before we sign anything.",
    "Right now the main issue is that invoices arrive late and our team has to chase them.",
    "Understood. I will note that the billing cycle should start on the first of the month.",
    "Could you walk me through how the cancellation policy works?",
    "You can cancel with thirty days notice, there is no penalty after the first quarter.",
    "We had a few outages in the spring, so reliability matters a lot to us.",
    "I'll include the installation manual and the quote in the follow-up email.",
    "Is there a discount if we commit to two years instead of one?",
    "Yes, a two year term comes with a ten percent discount on the list price.",
    "Let me check the status of the claim, one moment please.",
    "The claim was approved yesterday and the payment should post within five days.",
    "Can {person} join the call on {day} as well? She handles procurement.",
    "Our warehouse at {address} receives deliveries before noon.",
];

const CLOSING: &[&str] = &[
    "Great, I'll send a confirmation to {email} by the end of the day.",
    "Perfect. I'll call you back on {day} at {hour} PM to finalize everything.",
    "Thanks {client}, I'll follow up with the quote and the next steps.",
    "Sounds good, talk to you on {day}. Have a nice day.",
];

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    pub count: usize,
    pub seed: u64,
    /// Share of transcripts deliberately built to fail one quality gate.
    pub reject_share: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            count: 40,
            seed: 7,
            reject_share: 0.1,
        }
    }
}

struct Slots {
    client: String,
    rep: String,
    person: String,
    company: String,
    phone: String,
    email: String,
    address: String,
    account: String,
    product: String,
    day: String,
    hour: u32,
    price: u32,
}

impl Slots {
    fn fill(&self, line: &str) -> String {
        line.replace("{client}", &self.client)
            .replace("{rep}", &self.rep)
            .replace("{person}", &self.person)
            .replace("{company}", &self.company)
            .replace("{phone}", &self.phone)
            .replace("{email}", &self.email)
            .replace("{address}", &self.address)
            .replace("{account}", &self.account)
            .replace("{product}", &self.product)
            .replace("{day}", &self.day)
            .replace("{hour}", &self.hour.to_string())
            .replace("{price}", &self.price.to_string())
    }
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty list")
}

fn email_for(name: &str, company: &str) -> String {
    let local = name.to_lowercase().replace(' ', ".");
    let domain: String = company
        .to_lowercase()
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect();
    format!("{local}@{domain}.com")
}

/// Builds one transcript; all randomness is keyed by `(seed, index)`.
pub fn synth_transcript(seed: u64, index: usize, reject_share: f64) -> Transcript {
    let mut rng = keyed_rng(seed, &["synth", &index.to_string()]);
    let client = pick(&mut rng, PERSON_NAMES).to_string();
    let mut rep = pick(&mut rng, PERSON_NAMES).to_string();
    while rep == client {
        rep = pick(&mut rng, PERSON_NAMES).to_string();
    }
    let person = pick(&mut rng, PERSON_NAMES).to_string();
    let company = pick(&mut rng, COMPANY_NAMES).to_string();
    let slots = Slots {
        email: email_for(&client, &company),
        phone: format!(
            "{}-555-{:04}",
            rng.gen_range(201..990),
            rng.gen_range(100..9999)
        ),
        address: format!(
            "{} {} {}",
            rng.gen_range(10..2000),
            pick(&mut rng, STREET_NAMES),
            pick(&mut rng, STREET_SUFFIXES)
        ),
        account: format!("{}", rng.gen_range(10_000_000u64..99_999_999)),
        product: pick(&mut rng, PRODUCTS).to_string(),
        day: pick(&mut rng, DAYS).to_string(),
        hour: rng.gen_range(1..6),
        price: rng.gen_range(4..90) * 25,
        client,
        rep,
        person,
        company,
    };

    let mut lines = vec![pick(&mut rng, OPENING), pick(&mut rng, CLIENT_REPLY)];
    let middle_len = rng.gen_range(8..14);
    let mut middle: Vec<&str> = MIDDLE.to_vec();
    middle.shuffle(&mut rng);
    lines.extend(middle.into_iter().take(middle_len));
    lines.push(pick(&mut rng, CLOSING));

    let three_way = rng.gen_bool(0.25);
    let failing_gate = if rng.gen_bool(reject_share.clamp(0.0, 1.0)) {
        Some(rng.gen_range(0..3))
    } else {
        None
    };

    let mut clock = rng.gen_range(0.0..3.0);
    let turns = lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let speaker = match (failing_gate, three_way, i % 2) {
                (Some(2), _, _) => "A",
                (_, true, _) if i % 5 == 4 => "C",
                (_, _, 0) => "A",
                _ => "B",
            };
            let mut len = rng.gen_range(12.0..24.0);
            if failing_gate == Some(0) {
                len /= 4.0;
            }
            let start = clock;
            let end = start + len;
            clock = end + rng.gen_range(0.2..1.5);
            let confidence = if failing_gate == Some(1) {
                rng.gen_range(0.45..0.7)
            } else {
                rng.gen_range(0.84..0.99)
            };
            let confidence = (confidence * 1000.0_f64).round() / 1000.0;
            let round = |x: f64| (x * 100.0).round() / 100.0;
            TranscriptTurn::timed(
                speaker,
                round(start),
                round(end),
                &slots.fill(line),
                confidence,
            )
        })
        .collect();

    let mut metadata = BTreeMap::new();
    metadata.insert(
        "industry".to_string(),
        pick(&mut rng, INDUSTRIES).to_string(),
    );
    metadata.insert("year".to_string(), rng.gen_range(2019..2025).to_string());
    metadata.insert("source".to_string(), "synthetic".to_string());
    metadata.insert("role:A".to_string(), "Sales Representative".to_string());
    metadata.insert("role:B".to_string(), "Client".to_string());
    if three_way {
        metadata.insert("role:C".to_string(), "Manager".to_string());
    }
    Transcript {
        id: format!("demo-{index:05}"),
        metadata,
        turns,
    }
}

/// A reproducible corpus of `count` transcripts.
pub fn synth_corpus(opts: &SynthOptions) -> Vec<Transcript> {
    (0..opts.count)
        .map(|i| synth_transcript(opts.seed, i, opts.reject_share))
        .collect()
}

//! Built-in name lists shared by the bundled detectors and the synthetic corpus.

pub const PERSON_NAMES: &[&str] = &[
    "Maria Lopez",
    "Daniel Okafor",
    "Priya Raman",
    "Tomasz Nowak",
    "Aiko Tanaka",
    "Lucas Moreau",
    "Fatima Haddad",
    "Owen Gallagher",
    "Ingrid Svensson",
    "Rafael Duarte",
    "Chloe Bennett",
    "Kwame Mensah",
    "Elena Petrova",
    "Samir Haddad",
    "Grace Whitfield",
    "Mateo Alvarez",
    "Hannah Becker",
    "Arjun Mehta",
    "Sofia Russo",
    "Liam Donnelly",
    "Alfildr Jonsson",
    "Nadia Karimi",
];

pub const COMPANY_NAMES: &[&str] = &[
    "Acme Corp",
    "Globex",
    "Initech",
    "Umbrella Logistics",
    "Stark Industries",
    "Wayne Enterprises",
    "Hooli",
    "Vandelay Industries",
    "Soylent Foods",
    "Cyberdyne Systems",
    "Wonka Industries",
    "Pied Piper",
    "Dunder Mifflin",
    "Oscorp",
    "Tyrell Corporation",
    "Massive Dynamic",
];

pub const STREET_NAMES: &[&str] = &[
    "Maple", "Cedar", "Harbor", "Lakeview", "Willow", "Sunset", "Mill", "Orchard", "Elm",
    "Ridgeway",
];

pub const STREET_SUFFIXES: &[&str] = &["Street", "Avenue", "Road", "Boulevard", "Lane", "Drive"];

/// Surrogate person names used when person names are noised rather than masked.
pub const NOISE_PERSON_NAMES: &[&str] = &[
    "Jordan Ellis",
    "Taylor Brooks",
    "Morgan Reyes",
    "Casey Lindqvist",
    "Riley Novak",
    "Avery Chen",
    "Quinn Adebayo",
    "Jamie Fontaine",
    "Robin Castillo",
    "Alex Varga",
    "Sasha Ivanova",
    "Drew Harper",
];

/// Surrogate company names for noised company mentions.
pub const NOISE_COMPANY_NAMES: &[&str] = &[
    "Northwind Traders",
    "Contoso",
    "Fabrikam",
    "Blue Yonder Airlines",
    "Tailspin Toys",
    "Litware",
];

/// First names of [`PERSON_NAMES`].
pub fn first_names() -> Vec<&'static str> {
    PERSON_NAMES
        .iter()
        .filter_map(|n| n.split(' ').next())
        .collect()
}

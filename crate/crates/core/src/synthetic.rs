//! Planted-topic corpus generator for tests, demos and benchmarks.
//!
//! Every document is drawn from exactly one theme. Sentences mix words from
//! the theme's vocabulary with filler shared by all themes, so the themes
//! overlap lexically but remain recoverable.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::RawComment;

const THEMES: [(&str, &[&str]); 20] = [
    ("network outage", &["outage", "signal", "down", "tower", "bars", "dropped", "coverage", "dead", "zone", "restored", "blackout", "reception"]),
    ("billing dispute", &["bill", "charged", "invoice", "refund", "overcharge", "statement", "fee", "payment", "autopay", "credit", "balance", "dispute"]),
    ("roaming abroad", &["roaming", "abroad", "travel", "international", "passport", "europe", "overseas", "airport", "trip", "foreign", "daypass", "border"]),
    ("device upgrade", &["upgrade", "phone", "trade", "model", "eligible", "installment", "screen", "handset", "preorder", "flagship", "unlock", "swap"]),
    ("internet speed", &["speed", "slow", "mbps", "throttled", "latency", "download", "upload", "buffering", "bandwidth", "ping", "lag", "fiber"]),
    ("customer service", &["agent", "hold", "waited", "transferred", "rude", "chat", "representative", "escalate", "supervisor", "callback", "queue", "helpful"]),
    ("store visit", &["store", "retail", "appointment", "location", "mall", "associate", "counter", "walkin", "staff", "pickup", "line", "branch"]),
    ("sim activation", &["sim", "activation", "esim", "activate", "card", "port", "number", "transfer", "iccid", "provisioning", "tray", "swap"]),
    ("streaming perks", &["streaming", "netflix", "subscription", "perk", "bundle", "free", "hulu", "music", "video", "channel", "trial", "offer"]),
    ("home internet", &["router", "modem", "wifi", "gateway", "home", "installation", "technician", "ethernet", "mesh", "cable", "setup", "broadband"]),
    ("prepaid plans", &["prepaid", "refill", "topup", "minutes", "expire", "voucher", "recharge", "monthly", "allowance", "airtime", "pin", "cheap"]),
    ("5g rollout", &["5g", "rollout", "midband", "millimeter", "antenna", "deployment", "ultra", "capable", "nsa", "spectrum", "launch", "cities"]),
    ("spam calls", &["spam", "robocall", "scam", "blocked", "caller", "fraud", "telemarketer", "scamlikely", "unknown", "filter", "harass", "voicemail"]),
    ("data caps", &["cap", "limit", "gigabytes", "overage", "hotspot", "unlimited", "deprioritized", "usage", "allotment", "exceeded", "rollover", "tethering"]),
    ("contract cancellation", &["cancel", "contract", "termination", "penalty", "switching", "leave", "early", "etf", "commitment", "churn", "retention", "notice"]),
    ("app problems", &["app", "login", "crash", "update", "password", "account", "error", "freeze", "version", "ios", "android", "bug"]),
    ("family plan", &["family", "lines", "kids", "share", "parental", "add", "member", "discount", "household", "child", "teen", "group"]),
    ("texting issues", &["text", "sms", "mms", "message", "delivered", "group", "imessage", "picture", "received", "undelivered", "rcs", "reply"]),
    ("weather damage", &["storm", "hurricane", "flood", "power", "emergency", "generator", "wind", "tornado", "shelter", "evacuation", "damage", "snow"]),
    ("loyalty rewards", &["loyalty", "reward", "points", "tuesday", "giveaway", "gift", "redeem", "member", "bonus", "promo", "coupon", "thanks"]),
];

const FILLER: &[&str] = &[
    "the", "my", "is", "again", "today", "why", "still", "please", "really", "just", "this",
    "week", "what", "can", "anyone", "help", "so", "and", "it", "was", "not", "thanks", "been",
    "since", "yesterday", "now", "ever", "you", "guys", "your", "any", "update", "on",
];

/// A generated document with its planted theme.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedDoc {
    pub comment: RawComment,
    pub theme: usize,
}

#[derive(Debug, Clone)]
pub struct PlantedSpec {
    pub themes: usize,
    pub docs_per_theme: usize,
    /// Share of words drawn from the theme vocabulary.
    pub theme_share: f64,
    /// Span covered by timestamps, in weeks, ending at `end`.
    pub weeks: i64,
    pub end: DateTime<Utc>,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            themes: 20,
            docs_per_theme: 150,
            theme_share: 0.6,
            weeks: 12,
            end: Utc.with_ymd_and_hms(2021, 6, 28, 0, 0, 0).unwrap(),
            seed: 7,
        }
    }
}

pub fn theme_names() -> impl Iterator<Item = &'static str> {
    THEMES.iter().map(|(name, _)| *name)
}

/// Generates `themes * docs_per_theme` documents with ids `doc-00000` onward,
/// shuffled so that ids carry no theme information.
///
/// Even-numbered themes get more traffic as time goes on, odd-numbered
/// themes less, which gives the trend stage something to find.
pub fn planted_corpus(spec: &PlantedSpec) -> Vec<PlantedDoc> {
    assert!(spec.themes <= THEMES.len(), "at most {} themes", THEMES.len());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let span = Duration::weeks(spec.weeks).num_seconds();
    let start = spec.end - Duration::seconds(span);
    let mut themes: Vec<usize> = (0..spec.themes)
        .flat_map(|t| std::iter::repeat_n(t, spec.docs_per_theme))
        .collect();
    rand::seq::SliceRandom::shuffle(themes.as_mut_slice(), &mut rng);
    themes
        .into_iter()
        .enumerate()
        .map(|(i, theme)| {
            let text = compose(&mut rng, theme, spec.theme_share);
            // Triangular skew: max of two uniforms leans late, min leans early.
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let frac = if theme % 2 == 0 { u.max(v) } else { u.min(v) };
            let offset = ((span - 1) as f64 * frac) as i64;
            PlantedDoc {
                comment: RawComment {
                    id: format!("doc-{i:05}"),
                    text,
                    created_at: start + Duration::seconds(offset),
                    author: None,
                    lang: Some("en".into()),
                },
                theme,
            }
        })
        .collect()
}

fn compose(rng: &mut ChaCha8Rng, theme: usize, share: f64) -> String {
    let vocab = THEMES[theme].1;
    let sentences = rng.random_range(1..=3);
    let mut out = Vec::with_capacity(sentences);
    for _ in 0..sentences {
        let len = rng.random_range(6..=12);
        let words: Vec<&str> = (0..len)
            .map(|_| {
                let pool = if rng.random_bool(share) { vocab } else { FILLER };
                *pool.choose(rng).expect("non-empty vocabulary")
            })
            .collect();
        let mut s = words.join(" ");
        if let Some(first) = s.get(..1) {
            s = first.to_uppercase() + &s[1..];
        }
        s.push(if rng.random_bool(0.2) { '?' } else { '.' });
        out.push(s);
    }
    out.join(" ")
}

/// Writes the comments as input JSONL lines.
pub fn to_jsonl(docs: &[PlantedDoc]) -> String {
    let mut out = String::new();
    for d in docs {
        let line = serde_json::json!({
            "id": d.comment.id,
            "text": d.comment.text,
            "created_at": d.comment.created_at.to_rfc3339(),
            "lang": d.comment.lang,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

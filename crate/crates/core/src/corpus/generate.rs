//! Latent-interest marketplace simulator.
//!
//! Every category belongs to one interest (`category % n_interests`). Each
//! interest has its own pseudo-word lexicon and brands; each category adds a
//! few words of its own. Users hold 1-3 weighted interests, browse in short
//! sessions with a (interest, category) mission, and click on impressions
//! either along their current mission or along their long-term profile.
//! The mission behind an impression was already visited once a few hours
//! earlier, so history older than the current session still points at it.

use std::collections::HashSet;

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::types::*;
use crate::error::Result;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";
const COLORS: &[&str] = &["Black", "White", "Red", "Blue", "Green", "Silver", "Gold", "Grey"];
const CONDITIONS: &[&str] = &["New", "Used", "Refurbished"];

const GENERIC_WORDS: usize = 30;
const INTEREST_WORDS: usize = 10;
const CATEGORY_WORDS: usize = 5;
const BRANDS_PER_INTEREST: usize = 4;
/// Log-popularity spread across brands and across items of one brand.
const BRAND_SPREAD: f64 = 1.2;
const ITEM_SPREAD: f64 = 0.6;
/// Views are drawn with weight popularity^BROWSE_EXPONENT.
const BROWSE_EXPONENT: f64 = 0.5;
/// Chance that a click goes back to an item viewed in the current session.
const RECLICK_RATE: f64 = 0.03;
/// Chance that a click follows the current mission rather than the profile.
const FOLLOW_MISSION: f64 = 0.8;
const FOLLOW_MISSION_DOMINANT: f64 = 0.95;
/// Chance that a click stays in the mission's category (else anywhere in its interest).
const SAME_CATEGORY_CLICK: f64 = 0.9;
/// Seconds between consecutive events of a session. Eight events fit well
/// inside ten minutes, so the default training skip hides the whole session.
const SESSION_GAP: std::ops::RangeInclusive<i64> = 10..=60;
/// Share of impression negatives drawn from the clicked item's category.
const SIMILAR_NEGATIVE_RATE: f64 = 0.5;

/// Latent structure behind a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub category_interest: Vec<usize>,
    /// Aligned with the item list.
    pub item_interest: Vec<usize>,
    pub item_popularity: Vec<f64>,
    /// Aligned with user index; `(interest, weight)` with weights summing to 1.
    pub user_interests: Vec<Vec<(usize, f64)>>,
    pub user_favorite_categories: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub items: Vec<ItemRecord>,
    pub events: Vec<UserEvent>,
    pub impressions: Vec<ImpressionRecord>,
    pub truth: GroundTruth,
}

pub fn user_id(u: usize) -> String {
    format!("u{u:05}")
}

pub fn item_id(i: usize) -> String {
    format!("i{i:06}")
}

pub fn generate_corpus(
    cfg: &CorpusConfig,
) -> Result<(Vec<ItemRecord>, Vec<UserEvent>, Vec<ImpressionRecord>)> {
    let c = generate_corpus_with_truth(cfg)?;
    Ok((c.items, c.events, c.impressions))
}

struct Lexicon {
    generic: Vec<String>,
    interest: Vec<Vec<String>>,
    category: Vec<Vec<String>>,
    brands: Vec<Vec<String>>,
}

fn pseudo_word(rng: &mut ChaCha8Rng, seen: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
        }
        if seen.insert(w.clone()) {
            return w;
        }
    }
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

impl Lexicon {
    fn new(cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut seen = HashSet::new();
        let mut words = |n: usize, rng: &mut ChaCha8Rng| -> Vec<String> {
            (0..n).map(|_| pseudo_word(rng, &mut seen)).collect()
        };
        let generic = words(GENERIC_WORDS, rng);
        let interest = (0..cfg.n_latent_interests)
            .map(|_| words(INTEREST_WORDS, rng))
            .collect();
        let category = (0..cfg.n_categories)
            .map(|_| words(CATEGORY_WORDS, rng))
            .collect();
        let brands = (0..cfg.n_latent_interests)
            .map(|_| {
                words(BRANDS_PER_INTEREST, rng)
                    .iter()
                    .map(|w| capitalize(w))
                    .collect()
            })
            .collect();
        Lexicon {
            generic,
            interest,
            category,
            brands,
        }
    }
}

/// Popularity-weighted item pools at category, interest and catalog level.
struct Catalog {
    by_category: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>>,
    by_interest: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>>,
    all: WeightedIndex<f64>,
    category: Vec<u32>,
}

fn pool(members: Vec<usize>, pop: &[f64]) -> Option<(Vec<usize>, WeightedIndex<f64>)> {
    if members.is_empty() {
        return None;
    }
    let w = WeightedIndex::new(members.iter().map(|&i| pop[i])).expect("positive weights");
    Some((members, w))
}

impl Catalog {
    fn new(by_category: &[Vec<usize>], by_interest: &[Vec<usize>], weight: &[f64], category: Vec<u32>) -> Self {
        Catalog {
            by_category: by_category.iter().map(|m| pool(m.clone(), weight)).collect(),
            by_interest: by_interest.iter().map(|m| pool(m.clone(), weight)).collect(),
            all: WeightedIndex::new(weight).expect("positive weights"),
            category,
        }
    }

    fn from_category(&self, c: u32, interest: usize, rng: &mut ChaCha8Rng) -> usize {
        match &self.by_category[c as usize] {
            Some((m, w)) => m[w.sample(rng)],
            None => self.from_interest(interest, rng),
        }
    }

    fn from_interest(&self, i: usize, rng: &mut ChaCha8Rng) -> usize {
        match &self.by_interest[i] {
            Some((m, w)) => m[w.sample(rng)],
            None => self.all.sample(rng),
        }
    }
}

#[derive(Clone, Copy)]
struct Mission {
    interest: usize,
    category: u32,
}

struct Profile {
    interests: Vec<(usize, f64)>,
    weights: WeightedIndex<f64>,
    favorites: Vec<Vec<u32>>,
}

impl Profile {
    fn mission(&self, cfg: &CorpusConfig, rng: &mut ChaCha8Rng) -> Mission {
        let k = self.weights.sample(rng);
        let interest = self.interests[k].0;
        let fav = &self.favorites[k];
        let category = if !fav.is_empty() && rng.gen_bool(0.7) {
            fav[rng.gen_range(0..fav.len())]
        } else {
            interest_category(cfg, interest, rng)
        };
        Mission { interest, category }
    }
}

fn interest_category(cfg: &CorpusConfig, interest: usize, rng: &mut ChaCha8Rng) -> u32 {
    let n = cfg.n_latent_interests;
    let per = (cfg.n_categories - interest).div_ceil(n);
    (interest + n * rng.gen_range(0..per)) as u32
}

struct Generator<'a> {
    cfg: &'a CorpusConfig,
    rng: ChaCha8Rng,
    lex: Lexicon,
    /// Click pools, weighted by popularity.
    catalog: Catalog,
    /// Browsing pools; flatter than clicks.
    browse: Catalog,
    /// Uniform pools, for impressed items that were not clicked.
    shelf: Catalog,
    items: Vec<ItemRecord>,
}

impl Generator<'_> {
    fn session_len(&mut self) -> usize {
        if self.cfg.last_interest_dominant {
            5
        } else {
            self.rng.gen_range(3..=8)
        }
    }

    fn event(&mut self, user: &str, t: i64, m: Mission) -> UserEvent {
        if self.rng.gen_bool(self.cfg.query_rate) {
            let words = &self.lex.category[m.category as usize];
            let n = self.rng.gen_range(1..=2);
            let mut q: Vec<String> = words
                .choose_multiple(&mut self.rng, n)
                .cloned()
                .collect();
            if self.rng.gen_bool(0.5) {
                q.push(self.lex.interest[m.interest].choose(&mut self.rng).unwrap().clone());
            }
            let cat = self.rng.gen_bool(0.9).then_some(m.category);
            UserEvent::search(user, t, q.join(" "), cat)
        } else {
            let it = if self.rng.gen_bool(0.8) {
                self.browse.from_category(m.category, m.interest, &mut self.rng)
            } else {
                self.browse.from_interest(m.interest, &mut self.rng)
            };
            UserEvent::item_view(user, t, self.items[it].item_id.clone())
        }
    }

    /// One session ending shortly before `end`, oldest event first.
    fn session_before(&mut self, user: &str, end: i64, m: Mission) -> Vec<UserEvent> {
        let n = self.session_len();
        let mut t = end - self.rng.gen_range(SESSION_GAP);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.event(user, t.max(0), m));
            t -= self.rng.gen_range(SESSION_GAP);
        }
        out.reverse();
        out
    }

    fn click(&mut self, profile: &Profile, current: Mission, session: &[UserEvent]) -> usize {
        let viewed: Vec<&str> = session.iter().filter_map(|e| e.item_id.as_deref()).collect();
        if !viewed.is_empty() && self.rng.gen_bool(RECLICK_RATE) {
            let id = viewed[self.rng.gen_range(0..viewed.len())];
            return id[1..].parse().expect("generated id");
        }
        if self.rng.gen_bool(0.05) {
            return self.catalog.all.sample(&mut self.rng);
        }
        let follow_current = if self.cfg.last_interest_dominant {
            FOLLOW_MISSION_DOMINANT
        } else {
            FOLLOW_MISSION
        };
        let m = if self.rng.gen_bool(follow_current) {
            current
        } else {
            profile.mission(self.cfg, &mut self.rng)
        };
        if self.rng.gen_bool(SAME_CATEGORY_CLICK) {
            self.catalog.from_category(m.category, m.interest, &mut self.rng)
        } else {
            self.catalog.from_interest(m.interest, &mut self.rng)
        }
    }
}

pub fn generate_corpus_with_truth(cfg: &CorpusConfig) -> Result<SyntheticCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let lex = Lexicon::new(cfg, &mut rng);
    let n_int = cfg.n_latent_interests;
    let category_interest: Vec<usize> = (0..cfg.n_categories).map(|c| c % n_int).collect();
    let brand_appeal: Vec<Vec<f64>> = (0..n_int)
        .map(|_| {
            (0..BRANDS_PER_INTEREST)
                .map(|_| BRAND_SPREAD * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    let mut items = Vec::with_capacity(cfg.n_items);
    let mut item_interest = Vec::with_capacity(cfg.n_items);
    let mut item_popularity = Vec::with_capacity(cfg.n_items);
    let mut item_category = Vec::with_capacity(cfg.n_items);
    for j in 0..cfg.n_items {
        let category = if j < cfg.n_categories {
            j as u32
        } else {
            let i = rng.gen_range(0..n_int);
            interest_category(cfg, i, &mut rng)
        };
        let interest = category_interest[category as usize];
        let b = rng.gen_range(0..BRANDS_PER_INTEREST);
        let brand = lex.brands[interest][b].clone();
        let mut words: Vec<String> = lex.category[category as usize]
            .choose_multiple(&mut rng, 2)
            .cloned()
            .collect();
        let n_iw = rng.gen_range(1..=2);
        words.extend(lex.interest[interest].choose_multiple(&mut rng, n_iw).cloned());
        let n_gen = rng.gen_range(0..=2);
        words.extend(lex.generic.choose_multiple(&mut rng, n_gen).cloned());
        words.shuffle(&mut rng);
        let mut title = brand.clone();
        for w in &words {
            title.push(' ');
            title.push_str(&if rng.gen_bool(0.5) { capitalize(w) } else { w.clone() });
        }
        if rng.gen_bool(0.3) {
            let letter = (b'A' + rng.gen_range(0..26u8)) as char;
            title.push_str(&format!(" {letter}{}", rng.gen_range(10..1000)));
        }
        if rng.gen_bool(0.2) {
            title.push_str(", ");
            title.push_str(&capitalize(lex.generic.choose(&mut rng).unwrap()));
            title.push('!');
        }
        let color = COLORS[rng.gen_range(0..COLORS.len())];
        let condition = CONDITIONS[rng.gen_range(0..CONDITIONS.len())];
        items.push(ItemRecord {
            item_id: item_id(j),
            title,
            category_id: category,
            aspects: vec![
                format!("Brand:{brand}"),
                format!("Color:{color}"),
                format!("Condition:{condition}"),
            ],
        });
        let z: f64 = rng.sample(StandardNormal);
        item_popularity.push((brand_appeal[interest][b] + ITEM_SPREAD * z).exp());
        item_interest.push(interest);
        item_category.push(category);
    }

    let mut cat_members = vec![Vec::new(); cfg.n_categories];
    let mut int_members = vec![Vec::new(); n_int];
    for j in 0..cfg.n_items {
        cat_members[item_category[j] as usize].push(j);
        int_members[item_interest[j]].push(j);
    }
    let browse_weight: Vec<f64> = item_popularity.iter().map(|p| p.powf(BROWSE_EXPONENT)).collect();
    let catalog = Catalog::new(&cat_members, &int_members, &item_popularity, item_category.clone());
    let browse = Catalog::new(&cat_members, &int_members, &browse_weight, item_category.clone());
    let shelf = Catalog::new(&cat_members, &int_members, &vec![1.0; cfg.n_items], item_category);

    let mut g = Generator {
        cfg,
        rng,
        lex,
        catalog,
        browse,
        shelf,
        items,
    };
    let bounds = cfg.split_bounds();
    let windows = [
        (bounds.start, bounds.train_end),
        (bounds.train_end, bounds.validation_end),
        (bounds.validation_end, bounds.end),
    ];
    let mut events = Vec::new();
    let mut impressions = Vec::new();
    let mut user_interests = Vec::with_capacity(cfg.n_users);
    let mut user_favorite_categories = Vec::with_capacity(cfg.n_users);

    for u in 0..cfg.n_users {
        let uid = user_id(u);
        let rng = &mut g.rng;
        let k = rng.gen_range(1..=3usize.min(n_int));
        let chosen = rand::seq::index::sample(rng, n_int, k).into_vec();
        let raw: Vec<f64> = chosen.iter().map(|_| rng.gen_range(0.3..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let interests: Vec<(usize, f64)> =
            chosen.iter().zip(&raw).map(|(&i, &w)| (i, w / total)).collect();
        let favorites: Vec<Vec<u32>> = interests
            .iter()
            .map(|&(i, _)| {
                let mut f: Vec<u32> = (0..2).map(|_| interest_category(cfg, i, rng)).collect();
                f.dedup();
                f
            })
            .collect();
        let profile = Profile {
            weights: WeightedIndex::new(interests.iter().map(|x| x.1)).unwrap(),
            interests,
            favorites,
        };

        let mut user_events = Vec::new();
        let mut busy: Vec<(i64, i64)> = Vec::new();
        for k in 0..cfg.impressions_per_user {
            let (lo, hi) = windows[k % 3];
            let t_imp = g.rng.gen_range(lo..hi);
            let mission = profile.mission(cfg, &mut g.rng);
            let session = g.session_before(&uid, t_imp, mission);
            let n_pos = if g.rng.gen_bool(0.15) { 2 } else { 1 };
            let mut positives = Vec::new();
            for _ in 0..n_pos * 4 {
                let p = g.click(&profile, mission, &session);
                if !positives.contains(&p) {
                    positives.push(p);
                }
                if positives.len() == n_pos {
                    break;
                }
            }
            let n_neg = cfg.impression_size.saturating_sub(positives.len());
            let anchor = positives[0];
            let mut negatives = Vec::new();
            let mut attempts = 0;
            while negatives.len() < n_neg && attempts < n_neg * 20 {
                attempts += 1;
                let cand = if g.rng.gen_bool(SIMILAR_NEGATIVE_RATE) {
                    let c = g.catalog.category[anchor];
                    g.shelf.from_category(c, item_interest[anchor], &mut g.rng)
                } else {
                    g.rng.gen_range(0..cfg.n_items)
                };
                if !positives.contains(&cand) && !negatives.contains(&cand) {
                    negatives.push(cand);
                }
            }
            let mut j = 0;
            while negatives.len() < n_neg {
                if !positives.contains(&j) && !negatives.contains(&j) {
                    negatives.push(j);
                }
                j += 1;
            }
            // shoppers come back to a mission: an earlier visit 1-6 h before
            let start = session.first().map_or(t_imp, |e| e.timestamp);
            let end = start - g.rng.gen_range(3600..6 * 3600);
            let earlier = g.session_before(&uid, end, mission);
            let start = earlier.first().map_or(end, |e| e.timestamp);
            user_events.extend(earlier);
            busy.push((start - 3600, t_imp + 600));
            user_events.extend(session);
            user_events.push(UserEvent::item_view(
                &uid,
                t_imp + g.rng.gen_range(5..=60),
                g.items[positives[0]].item_id.clone(),
            ));
            impressions.push(ImpressionRecord {
                user_id: uid.clone(),
                impression_time: t_imp,
                positive_item_ids: positives.iter().map(|&p| g.items[p].item_id.clone()).collect(),
                negative_item_ids: negatives.iter().map(|&p| g.items[p].item_id.clone()).collect(),
            });
        }

        let (lo, hi) = cfg.events_per_user_range;
        let mut budget = g.rng.gen_range(lo..=hi);
        while budget > 0 {
            let mission = profile.mission(cfg, &mut g.rng);
            let mut end = 0;
            for _ in 0..20 {
                end = g.rng.gen_range(3600..bounds.end);
                if !busy.iter().any(|&(a, b)| end + 600 > a && end - 3600 < b) {
                    break;
                }
            }
            let mut s = g.session_before(&uid, end, mission);
            s.truncate(budget);
            budget -= s.len();
            user_events.extend(s);
        }
        user_events.sort_by_key(|e| e.timestamp);
        events.extend(user_events);
        user_interests.push(profile.interests);
        user_favorite_categories.push(profile.favorites.concat());
    }

    Ok(SyntheticCorpus {
        items: g.items,
        events,
        impressions,
        truth: GroundTruth {
            category_interest,
            item_interest,
            item_popularity,
            user_interests,
            user_favorite_categories,
        },
    })
}

impl GroundTruth {
    /// Oracle relevance of every item for user `u` from the latent structure:
    /// profile weight of the item's interest, boosted for favorite categories,
    /// times popularity.
    pub fn oracle_scores(&self, u: usize, items: &[ItemRecord]) -> Vec<f64> {
        let prof = &self.user_interests[u];
        let fav = &self.user_favorite_categories[u];
        items
            .iter()
            .enumerate()
            .map(|(j, it)| {
                let w = prof
                    .iter()
                    .find(|(i, _)| *i == self.item_interest[j])
                    .map_or(0.0, |x| x.1);
                let boost = if fav.contains(&it.category_id) { 3.0 } else { 1.0 };
                w * boost * self.item_popularity[j]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            n_users: 10,
            n_items: 50,
            rng_seed: 7,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn counts_follow_config() {
        let (items, events, imps) = generate_corpus(&small()).unwrap();
        let ids: HashSet<_> = items.iter().map(|i| &i.item_id).collect();
        assert_eq!(ids.len(), 50);
        let users: HashSet<_> = events.iter().map(|e| &e.user_id).collect();
        assert_eq!(users.len(), 10);
        assert_eq!(imps.len(), 10 * 4);
        for e in &events {
            e.validate().unwrap();
        }
        for imp in &imps {
            imp.validate().unwrap();
            assert_eq!(imp.positive_item_ids.len() + imp.negative_item_ids.len(), 12);
            for id in imp.positive_item_ids.iter().chain(&imp.negative_item_ids) {
                assert!(ids.contains(id));
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(
            generate_corpus_with_truth(&small()).unwrap(),
            generate_corpus_with_truth(&small()).unwrap()
        );
        let other = CorpusConfig {
            rng_seed: 8,
            ..small()
        };
        assert_ne!(
            generate_corpus(&small()).unwrap().0,
            generate_corpus(&other).unwrap().0
        );
    }

    #[test]
    fn interest_categories_stay_in_range() {
        let cfg = CorpusConfig {
            n_categories: 23,
            n_latent_interests: 10,
            ..small()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in 0..10 {
            for _ in 0..50 {
                let c = interest_category(&cfg, i, &mut rng);
                assert!((c as usize) < 23);
                assert_eq!(c as usize % 10, i);
            }
        }
    }
}

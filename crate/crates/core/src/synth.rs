//! Deterministic synthetic chat corpora for demos and tests.
//!
//! Conversations are about one of a fixed set of topics. Messages draw from a
//! topic's message-side words and responses from its response-side words, so
//! the message–response link is semantic rather than lexical. Some messages
//! are generic follow-ups ("how so?") whose topic is only recoverable from the
//! context turn, which is written by the same speaker as the response.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ConversationTriple, MrPair, Utterance};

struct Topic {
    message_words: &'static [&'static str],
    response_words: &'static [&'static str],
}

const TOPICS: &[Topic] = &[
    Topic {
        message_words: &["pizza", "burger", "pasta", "dinner", "noodles", "curry", "sandwich", "lunch"],
        response_words: &["delicious", "tasty", "cheesy", "spicy", "yummy", "crispy", "hungry", "sauce", "dessert", "flavour"],
    },
    Topic {
        message_words: &["song", "album", "concert", "band", "playlist", "guitar", "singer", "lyrics"],
        response_words: &["catchy", "melody", "loud", "chorus", "rhythm", "vinyl", "encore", "tune", "beats", "acoustic"],
    },
    Topic {
        message_words: &["football", "match", "goal", "league", "striker", "penalty", "stadium", "referee"],
        response_words: &["scored", "defence", "trophy", "fans", "offside", "champions", "tackle", "keeper", "derby", "kickoff"],
    },
    Topic {
        message_words: &["movie", "film", "cinema", "trailer", "actor", "sequel", "director", "netflix"],
        response_words: &["popcorn", "plot", "ending", "scenes", "twist", "boring", "hilarious", "cast", "screen", "subtitles"],
    },
    Topic {
        message_words: &["weather", "rain", "storm", "sunny", "cloudy", "forecast", "thunder", "humid"],
        response_words: &["umbrella", "soaked", "drizzle", "chilly", "breeze", "puddles", "sweaty", "cozy", "jacket", "degrees"],
    },
    Topic {
        message_words: &["trip", "flight", "vacation", "passport", "airport", "hotel", "abroad", "luggage"],
        response_words: &["beaches", "sightseeing", "souvenirs", "jetlag", "backpack", "tickets", "explore", "resort", "tourists", "journey"],
    },
    Topic {
        message_words: &["office", "boss", "meeting", "deadline", "salary", "colleague", "project", "overtime"],
        response_words: &["promotion", "emails", "shift", "payday", "cubicle", "manager", "quit", "clients", "workload", "resign"],
    },
    Topic {
        message_words: &["exam", "homework", "teacher", "assignment", "semester", "lecture", "grades", "syllabus"],
        response_words: &["studying", "revision", "notes", "library", "marks", "classmates", "tuition", "cramming", "quiz", "textbook"],
    },
    Topic {
        message_words: &["birthday", "bday", "cake", "candles", "turning", "party", "gifts", "celebrate"],
        response_words: &["wishes", "balloons", "surprise", "june", "frosting", "presents", "cheers", "anniversary", "treat", "older"],
    },
    Topic {
        message_words: &["coffee", "latte", "espresso", "cafe", "caffeine", "mug", "barista", "cappuccino"],
        response_words: &["brewed", "beans", "roast", "foam", "sleepless", "decaf", "aroma", "refill", "bitter", "sugar"],
    },
    Topic {
        message_words: &["game", "console", "playstation", "xbox", "level", "gamer", "controller", "multiplayer"],
        response_words: &["respawn", "boss", "loot", "quest", "pixel", "noob", "headshot", "ranked", "grinding", "arcade"],
    },
    Topic {
        message_words: &["dog", "puppy", "cat", "kitten", "pet", "vet", "leash", "hamster"],
        response_words: &["cuddles", "fluffy", "paws", "barking", "meow", "adorable", "treats", "fur", "walkies", "purring"],
    },
    Topic {
        message_words: &["shopping", "mall", "sale", "discount", "shoes", "dress", "outfit", "boutique"],
        response_words: &["bargain", "cart", "checkout", "pricey", "fitting", "stylish", "receipt", "brands", "wardrobe", "spent"],
    },
    Topic {
        message_words: &["gym", "workout", "running", "marathon", "yoga", "diet", "cardio", "weights"],
        response_words: &["sore", "muscles", "reps", "sweat", "stretching", "protein", "jogging", "fitness", "calories", "treadmill"],
    },
    Topic {
        message_words: &["phone", "laptop", "iphone", "android", "charger", "battery", "screen", "update"],
        response_words: &["apps", "gadget", "upgrade", "wifi", "storage", "camera", "bluetooth", "selfie", "software", "reboot"],
    },
    Topic {
        message_words: &["book", "novel", "author", "chapter", "reading", "poetry", "kindle", "paperback"],
        response_words: &["bookmark", "pages", "storyline", "characters", "bestseller", "fiction", "library", "bedtime", "sequel", "prose"],
    },
    Topic {
        message_words: &["cricket", "batsman", "wicket", "innings", "bowler", "sixer", "ipl", "century"],
        response_words: &["boundary", "runs", "stumps", "pitch", "spinner", "overs", "fielding", "catches", "umpire", "toss"],
    },
    Topic {
        message_words: &["beach", "ocean", "waves", "surfing", "sand", "seaside", "swimming", "tan"],
        response_words: &["sunscreen", "shells", "sunset", "snorkel", "lifeguard", "coconut", "bikini", "tides", "seagulls", "sunburn"],
    },
    Topic {
        message_words: &["sleep", "nap", "tired", "insomnia", "bedtime", "awake", "dreams", "snooze"],
        response_words: &["pillow", "blanket", "yawning", "exhausted", "nightmare", "alarm", "sleepy", "snoring", "rested", "lazy"],
    },
    Topic {
        message_words: &["car", "driving", "traffic", "highway", "engine", "bike", "garage", "license"],
        response_words: &["honking", "petrol", "speeding", "parking", "roadtrip", "mechanic", "brakes", "tyres", "jammed", "mileage"],
    },
    Topic {
        message_words: &["painting", "drawing", "sketch", "canvas", "artist", "gallery", "colours", "portrait"],
        response_words: &["brushes", "creative", "masterpiece", "doodle", "watercolor", "crayons", "exhibition", "palette", "abstract", "inspired"],
    },
    Topic {
        message_words: &["mom", "dad", "sister", "brother", "family", "parents", "cousins", "grandma"],
        response_words: &["siblings", "relatives", "hugs", "homesick", "reunion", "aunty", "cousin", "household", "together", "missing"],
    },
    Topic {
        message_words: &["dance", "dancing", "salsa", "choreography", "ballet", "moves", "club", "dj"],
        response_words: &["groove", "twirl", "steps", "partner", "dancefloor", "sway", "tango", "rehearsal", "spinning", "tapping"],
    },
    Topic {
        message_words: &["garden", "plants", "flowers", "roses", "seeds", "soil", "tomatoes", "watering"],
        response_words: &["blooming", "greenery", "sprouts", "leaves", "compost", "weeds", "harvest", "petals", "orchids", "pots"],
    },
];

const MESSAGE_OPENERS: &[&str] = &[
    "do you like", "what about", "have you tried", "thinking about", "i want", "tell me about",
    "any thoughts on", "how was your", "i miss my", "can't stop thinking about",
];
const MESSAGE_TAILS: &[&str] = &["", "today", "tonight", "lately", "right now", "this weekend"];
const RESPONSE_OPENERS: &[&str] = &[
    "yeah", "oh", "honestly", "haha", "i think", "well", "totally", "omg", "hmm", "lol",
];
const RESPONSE_TAILS: &[&str] = &["!", "for sure", "all day", ":)", "though", "...", "ikr"];
const CONNECTIVES: &[&str] = &["plus", "super", "kinda", "mostly"];
const GENERIC_MESSAGES: &[&str] = &[
    "how so?", "why?", "really?", "tell me more", "go ahead", "and then?", "seriously?",
    "like what?", "please", "you?",
];

/// Mixing ratios of the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskParams {
    /// Probability that a triple's turn 2 is a generic follow-up.
    pub generic_message_rate: f64,
    /// Same, for index pairs.
    pub generic_pair_rate: f64,
    /// Probability that a response repeats one of the message's topic words.
    pub echo_rate: f64,
}

impl Default for DeskParams {
    fn default() -> Self {
        DeskParams {
            generic_message_rate: 0.4,
            generic_pair_rate: 0.1,
            echo_rate: 0.3,
        }
    }
}

pub struct DeskGenerator {
    rng: ChaCha8Rng,
    params: DeskParams,
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty word list")
}

fn join(parts: &[&str]) -> String {
    parts
        .iter()
        .filter(|p| !p.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

impl DeskGenerator {
    pub fn new(seed: u64) -> Self {
        Self::with_params(seed, DeskParams::default())
    }

    pub fn with_params(seed: u64, params: DeskParams) -> Self {
        DeskGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            params,
        }
    }

    pub fn topic_count() -> usize {
        TOPICS.len()
    }

    fn two_words(&mut self, words: &'static [&'static str]) -> [&'static str; 2] {
        let mut it = words.choose_multiple(&mut self.rng, 2);
        [it.next().copied().unwrap(), it.next().copied().unwrap()]
    }

    fn topical_message(&mut self, topic: usize) -> (String, [&'static str; 2]) {
        let words = self.two_words(TOPICS[topic].message_words);
        let opener = pick(&mut self.rng, MESSAGE_OPENERS);
        let tail = pick(&mut self.rng, MESSAGE_TAILS);
        let and = if self.rng.gen_bool(0.5) { "and" } else { "or" };
        (join(&[opener, "the", words[0], and, words[1], tail]), words)
    }

    fn response(&mut self, topic: usize, echo: Option<&str>) -> String {
        let words = self.two_words(TOPICS[topic].response_words);
        let opener = pick(&mut self.rng, RESPONSE_OPENERS);
        let tail = pick(&mut self.rng, RESPONSE_TAILS);
        match echo {
            Some(e) => join(&[opener, words[0], e, words[1], tail]),
            None => {
                let connective = pick(&mut self.rng, CONNECTIVES);
                join(&[opener, words[0], connective, words[1], tail])
            }
        }
    }

    fn message_and_response(&mut self, topic: usize, generic: bool) -> (String, String) {
        if generic {
            let m = pick(&mut self.rng, GENERIC_MESSAGES).to_string();
            let r = self.response(topic, None);
            return (m, r);
        }
        let (m, words) = self.topical_message(topic);
        let echo = self
            .rng
            .gen_bool(self.params.echo_rate)
            .then(|| words[self.rng.gen_range(0..2)]);
        let r = self.response(topic, echo);
        (m, r)
    }

    pub fn pairs(&mut self, n: usize) -> Vec<MrPair> {
        (0..n)
            .map(|i| {
                let topic = self.rng.gen_range(0..TOPICS.len());
                let generic = self.rng.gen_bool(self.params.generic_pair_rate);
                let (m, r) = self.message_and_response(topic, generic);
                MrPair {
                    id: i as u32,
                    message: Utterance::new(m),
                    response: Utterance::new(r),
                }
            })
            .collect()
    }

    pub fn triples(&mut self, n: usize) -> Vec<ConversationTriple> {
        (0..n)
            .map(|_| {
                let topic = self.rng.gen_range(0..TOPICS.len());
                let context = self.response(topic, None);
                let generic = self.rng.gen_bool(self.params.generic_message_rate);
                let (m, r) = self.message_and_response(topic, generic);
                ConversationTriple {
                    context: Utterance::new(context),
                    message: Utterance::new(m),
                    response: Utterance::new(r),
                }
            })
            .collect()
    }
}

/// Pseudo-word lexicon of `n` distinct words built from syllables.
fn pseudo_words(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.gen_range(2..=3);
        let w: String = (0..syllables)
            .map(|_| format!("{}{}", pick(rng, ONSETS), pick(rng, VOWELS)))
            .collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

/// Pairs with token-level correspondence: message word `i` always answers to
/// response word `i`. Returns `(train, heldout)`, drawn from the same lexicon.
pub fn correspondence_pairs(
    n_train: usize,
    n_heldout: usize,
    lexicon_size: usize,
    words_per_utterance: usize,
    seed: u64,
) -> (Vec<MrPair>, Vec<MrPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lexicon = pseudo_words(2 * lexicon_size, &mut rng);
    let (m_words, r_words) = lexicon.split_at(lexicon_size);
    let mut make = |id: usize| {
        let picks: Vec<usize> =
            rand::seq::index::sample(&mut rng, lexicon_size, words_per_utterance).into_vec();
        let mut r_picks = picks.clone();
        r_picks.shuffle(&mut rng);
        let m: Vec<&str> = picks.iter().map(|&i| m_words[i].as_str()).collect();
        let r: Vec<&str> = r_picks.iter().map(|&i| r_words[i].as_str()).collect();
        MrPair {
            id: id as u32,
            message: Utterance::new(m.join(" ")),
            response: Utterance::new(r.join(" ")),
        }
    };
    let train = (0..n_train).map(&mut make).collect();
    let heldout = (0..n_heldout).map(&mut make).collect();
    (train, heldout)
}

/// Default desk corpus: index pairs, ranker-training triples and held-out triples.
pub struct DeskCorpus {
    pub pairs: Vec<MrPair>,
    pub train_triples: Vec<ConversationTriple>,
    pub heldout_triples: Vec<ConversationTriple>,
}

pub fn desk_corpus(seed: u64, n_pairs: usize, n_train: usize, n_heldout: usize) -> DeskCorpus {
    let mut g = DeskGenerator::new(seed);
    DeskCorpus {
        pairs: g.pairs(n_pairs),
        train_triples: g.triples(n_train),
        heldout_triples: g.triples(n_heldout),
    }
}

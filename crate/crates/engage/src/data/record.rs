use std::collections::{BTreeMap, BTreeSet};

/// The four reaction types, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reaction {
    Like = 0,
    Reply = 1,
    Retweet = 2,
    Quote = 3,
}

pub const REACTIONS: [Reaction; 4] = [
    Reaction::Like,
    Reaction::Reply,
    Reaction::Retweet,
    Reaction::Quote,
];

impl Reaction {
    pub fn name(self) -> &'static str {
        match self {
            Reaction::Like => "like",
            Reaction::Reply => "reply",
            Reaction::Retweet => "retweet",
            Reaction::Quote => "quote",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TweetType {
    TopLevel = 0,
    Retweet = 1,
    Quote = 2,
    ReplyThread = 3,
}

impl TweetType {
    pub fn from_code(code: u8) -> Option<TweetType> {
        match code {
            0 => Some(TweetType::TopLevel),
            1 => Some(TweetType::Retweet),
            2 => Some(TweetType::Quote),
            3 => Some(TweetType::ReplyThread),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MediaFlags {
    pub photo: bool,
    pub video: bool,
    pub gif: bool,
    pub link: bool,
}

impl MediaFlags {
    /// 4-bit code: photo | video<<1 | gif<<2 | link<<3.
    pub fn bits(self) -> u8 {
        self.photo as u8 | (self.video as u8) << 1 | (self.gif as u8) << 2 | (self.link as u8) << 3
    }
}

/// One (tweet, engaged user, engaging user) row of the interaction log.
///
/// The engaged user is the tweet's author; the engaging user is the one who
/// may react. A missing reaction timestamp means no engagement of that type.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub tweet_id: u64,
    pub engaged_user: u64,
    pub engaging_user: u64,
    pub tweet_tokens: Vec<u32>,
    pub hashtags: Vec<u32>,
    pub language: u16,
    pub media_flags: MediaFlags,
    pub tweet_type: TweetType,
    pub tweet_timestamp: i64,
    /// Indexed by [`Reaction`]: like, reply, retweet, quote.
    pub reaction_timestamps: [Option<i64>; 4],
    pub engaged_follower_count: u32,
    pub engaged_following_count: u32,
    pub engaging_follower_count: u32,
    pub engaging_following_count: u32,
    pub engaged_verified: bool,
    pub engaging_verified: bool,
    pub engaging_follows_engaged: bool,
    pub engaged_account_created: i64,
    pub engaging_account_created: i64,
}

impl InteractionRecord {
    pub fn reaction(&self, r: Reaction) -> Option<i64> {
        self.reaction_timestamps[r as usize]
    }

    pub fn has_reaction(&self, r: Reaction) -> bool {
        self.reaction_timestamps[r as usize].is_some()
    }

    pub fn any_reaction(&self) -> bool {
        self.reaction_timestamps.iter().any(Option::is_some)
    }

    /// Earliest present reaction timestamp, if any.
    pub fn first_reaction_time(&self) -> Option<i64> {
        self.reaction_timestamps.iter().flatten().copied().min()
    }

    /// Schema invariants; used by the reader and by generator property tests.
    pub fn validate(&self) -> Result<(), String> {
        if self.engaged_user == self.engaging_user {
            return Err("engaged_user equals engaging_user".into());
        }
        for (i, ts) in self.reaction_timestamps.iter().enumerate() {
            if let Some(t) = ts {
                if *t < self.tweet_timestamp {
                    return Err(format!(
                        "{} timestamp precedes tweet timestamp",
                        REACTIONS[i].name()
                    ));
                }
            }
        }
        if self.engaged_account_created > self.tweet_timestamp
            || self.engaging_account_created > self.tweet_timestamp
        {
            return Err("account created after tweet timestamp".into());
        }
        Ok(())
    }
}

/// Map from user id to the set of users following them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FollowerSets {
    pub followers: BTreeMap<u64, BTreeSet<u64>>,
}

impl FollowerSets {
    pub fn get(&self, user: u64) -> Option<&BTreeSet<u64>> {
        self.followers.get(&user)
    }

    pub fn insert(&mut self, user: u64, follower: u64) {
        if user != follower {
            self.followers.entry(user).or_default().insert(follower);
        }
    }
}

/// Dense row-major token embedding matrix (vocab x dim).
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub vocab: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl Embeddings {
    pub fn zeros(vocab: usize, dim: usize) -> Self {
        Embeddings {
            vocab,
            dim,
            data: vec![0.0; vocab * dim],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }
}

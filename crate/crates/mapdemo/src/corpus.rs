/// Sample commands used to seed token statistics, so that filler words
/// rate as uninformative from the start.
pub const DEMO_CORPUS: &[&str] = &[
    "shift the map to the right",
    "shift the map to the left",
    "shift it up a little",
    "shift down please",
    "move the map to the east",
    "move the map to the west",
    "move it to the north",
    "move the map south",
    "show me the area to the right",
    "show the top of the map",
    "show me what is under the river",
    "can you move to the left",
    "go to the right side",
    "scroll the map up",
    "pan down to the harbor",
    "make the map bigger",
    "make it smaller",
    "magnify the center",
    "zoom in on the park",
    "zoom out a bit",
    "make the map a lot bigger",
    "i want to see it smaller",
    "tell me about this hotel",
    "tell me about this restaurant",
    "what is this place",
    "show me the hotels near the station",
    "find a restaurant near the museum",
    "where is the nearest hotel",
    "which restaurant is open now",
    "tell me about the old town",
    "give me info about this building",
    "what can i do in the park",
    "how far is it to the airport",
    "show me the way to the beach",
    "is there a hotel on the left",
    "is there a restaurant to the right of the square",
    "book a table at this restaurant",
    "how much is a room at this hotel",
    "move it a bit to the right",
    "shift it once more to the right",
    "go back to the start",
    "center the map on the station",
    "show me all the museums",
    "what is the phone number of the hotel",
    "take me to the top of the hill",
    "move down to the bridge",
    "let me see the whole city",
    "i want the map to go left",
    "put the castle in the middle",
    "thanks that is good",
];

#[cfg(test)]
mod tests {
    use super::*;
    use aaosa_core::{token_set, tokenize_text};

    #[test]
    fn corpus_shape() {
        assert!((40..=60).contains(&DEMO_CORPUS.len()));
        let all: std::collections::BTreeSet<String> =
            DEMO_CORPUS.iter().flat_map(|l| token_set(&[tokenize_text(l)])).collect();
        for t in ["the", "to", "right", "shift"] {
            assert!(all.contains(t), "{t}");
        }
        assert!(!all.contains("view"));
    }
}

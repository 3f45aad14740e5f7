//! The original Porter suffix-stripping stemmer, on lowercase ASCII words.
//! Words with other characters, or shorter than three letters, are
//! returned unchanged.

struct Word {
    b: Vec<u8>,
}

impl Word {
    fn cons(&self, i: usize) -> bool {
        match self.b[i] {
            b'a' | b'e' | b'i' | b'o' | b'u' => false,
            b'y' => i == 0 || !self.cons(i - 1),
            _ => true,
        }
    }

    /// Number of VC sequences in `b[..len]`.
    fn measure(&self, len: usize) -> usize {
        let mut n = 0;
        let mut i = 0;
        while i < len && self.cons(i) {
            i += 1;
        }
        loop {
            while i < len && !self.cons(i) {
                i += 1;
            }
            if i >= len {
                return n;
            }
            while i < len && self.cons(i) {
                i += 1;
            }
            n += 1;
            if i >= len {
                return n;
            }
        }
    }

    fn has_vowel(&self, len: usize) -> bool {
        (0..len).any(|i| !self.cons(i))
    }

    fn double_cons(&self, len: usize) -> bool {
        len >= 2 && self.b[len - 1] == self.b[len - 2] && self.cons(len - 1)
    }

    /// consonant-vowel-consonant ending, last not w, x or y
    fn cvc(&self, len: usize) -> bool {
        if len < 3 || !self.cons(len - 1) || self.cons(len - 2) || !self.cons(len - 3) {
            return false;
        }
        !matches!(self.b[len - 1], b'w' | b'x' | b'y')
    }

    fn ends(&self, s: &str) -> bool {
        self.b.ends_with(s.as_bytes())
    }

    fn stem_len(&self, suffix: &str) -> usize {
        self.b.len() - suffix.len()
    }

    fn set_to(&mut self, suffix: &str, rep: &str) {
        let k = self.stem_len(suffix);
        self.b.truncate(k);
        self.b.extend_from_slice(rep.as_bytes());
    }

    /// Replaces the first matching suffix when the stem measure exceeds `m`.
    fn rules(&mut self, table: &[(&str, &str)], m: usize) {
        for (suf, rep) in table {
            if self.ends(suf) {
                if self.measure(self.stem_len(suf)) > m {
                    self.set_to(suf, rep);
                }
                return;
            }
        }
    }

    fn step1ab(&mut self) {
        if self.ends("sses") {
            self.set_to("sses", "ss");
        } else if self.ends("ies") {
            self.set_to("ies", "i");
        } else if !self.ends("ss") && self.ends("s") {
            self.set_to("s", "");
        }

        let mut extra = false;
        if self.ends("eed") {
            if self.measure(self.stem_len("eed")) > 0 {
                self.set_to("eed", "ee");
            }
        } else if self.ends("ed") && self.has_vowel(self.stem_len("ed")) {
            self.set_to("ed", "");
            extra = true;
        } else if self.ends("ing") && self.has_vowel(self.stem_len("ing")) {
            self.set_to("ing", "");
            extra = true;
        }
        if extra {
            let n = self.b.len();
            if self.ends("at") || self.ends("bl") || self.ends("iz") {
                self.b.push(b'e');
            } else if self.double_cons(n) && !matches!(self.b[n - 1], b'l' | b's' | b'z') {
                self.b.pop();
            } else if self.measure(n) == 1 && self.cvc(n) {
                self.b.push(b'e');
            }
        }
    }

    fn step1c(&mut self) {
        let n = self.b.len();
        if self.ends("y") && self.has_vowel(n - 1) {
            self.b[n - 1] = b'i';
        }
    }

    fn step2(&mut self) {
        const T: &[(&str, &str)] = &[
            ("ational", "ate"),
            ("tional", "tion"),
            ("enci", "ence"),
            ("anci", "ance"),
            ("izer", "ize"),
            ("abli", "able"),
            ("alli", "al"),
            ("entli", "ent"),
            ("eli", "e"),
            ("ousli", "ous"),
            ("ization", "ize"),
            ("ation", "ate"),
            ("ator", "ate"),
            ("alism", "al"),
            ("iveness", "ive"),
            ("fulness", "ful"),
            ("ousness", "ous"),
            ("aliti", "al"),
            ("iviti", "ive"),
            ("biliti", "ble"),
        ];
        self.rules(T, 0);
    }

    fn step3(&mut self) {
        const T: &[(&str, &str)] = &[
            ("icate", "ic"),
            ("ative", ""),
            ("alize", "al"),
            ("iciti", "ic"),
            ("ical", "ic"),
            ("ful", ""),
            ("ness", ""),
        ];
        self.rules(T, 0);
    }

    fn step4(&mut self) {
        const T: &[&str] = &[
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement", "ment", "ent", "ion",
            "ou", "ism", "ate", "iti", "ous", "ive", "ize",
        ];
        // longest match wins among overlapping suffixes
        let Some(suf) = T.iter().filter(|s| self.ends(s)).max_by_key(|s| s.len()) else {
            return;
        };
        let k = self.stem_len(suf);
        if self.measure(k) <= 1 {
            return;
        }
        if *suf == "ion" && !(k > 0 && matches!(self.b[k - 1], b's' | b't')) {
            return;
        }
        self.b.truncate(k);
    }

    fn step5(&mut self) {
        let n = self.b.len();
        if self.ends("e") {
            let m = self.measure(n - 1);
            if m > 1 || (m == 1 && !self.cvc(n - 1)) {
                self.b.pop();
            }
        }
        let n = self.b.len();
        if self.measure(n) > 1 && self.double_cons(n) && self.b[n - 1] == b'l' {
            self.b.pop();
        }
    }
}

pub fn porter_stem(word: &str) -> String {
    if word.len() < 3 || !word.bytes().all(|c| c.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut w = Word {
        b: word.as_bytes().to_vec(),
    };
    w.step1ab();
    if w.b.len() > 1 {
        w.step1c();
        w.step2();
        w.step3();
        w.step4();
        w.step5();
    }
    String::from_utf8(w.b).expect("ascii in, ascii out")
}

#[cfg(test)]
mod tests {
    use super::porter_stem;

    #[test]
    fn reference_vocabulary() {
        // pairs from the published Porter test vocabulary
        let cases = [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("ties", "ti"),
            ("caress", "caress"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("bled", "bled"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("troubled", "troubl"),
            ("sized", "size"),
            ("hopping", "hop"),
            ("tanned", "tan"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("fizzed", "fizz"),
            ("failing", "fail"),
            ("filing", "file"),
            ("happy", "happi"),
            ("sky", "sky"),
            ("relational", "relat"),
            ("conditional", "condit"),
            ("rational", "ration"),
            ("valenci", "valenc"),
            ("hesitanci", "hesit"),
            ("digitizer", "digit"),
            ("conformabli", "conform"),
            ("radicalli", "radic"),
            ("differentli", "differ"),
            ("vileli", "vile"),
            ("analogousli", "analog"),
            ("vietnamization", "vietnam"),
            ("predication", "predic"),
            ("operator", "oper"),
            ("feudalism", "feudal"),
            ("decisiveness", "decis"),
            ("hopefulness", "hope"),
            ("callousness", "callous"),
            ("formaliti", "formal"),
            ("sensitiviti", "sensit"),
            ("sensibiliti", "sensibl"),
            ("triplicate", "triplic"),
            ("formative", "form"),
            ("formalize", "formal"),
            ("electriciti", "electr"),
            ("electrical", "electr"),
            ("hopeful", "hope"),
            ("goodness", "good"),
            ("revival", "reviv"),
            ("allowance", "allow"),
            ("inference", "infer"),
            ("airliner", "airlin"),
            ("gyroscopic", "gyroscop"),
            ("adjustable", "adjust"),
            ("defensible", "defens"),
            ("irritant", "irrit"),
            ("replacement", "replac"),
            ("adjustment", "adjust"),
            ("dependent", "depend"),
            ("adoption", "adopt"),
            ("homologou", "homolog"),
            ("communism", "commun"),
            ("activate", "activ"),
            ("angulariti", "angular"),
            ("homologous", "homolog"),
            ("effective", "effect"),
            ("bowdlerize", "bowdler"),
            ("probate", "probat"),
            ("rate", "rate"),
            ("cease", "ceas"),
            ("controll", "control"),
            ("roll", "roll"),
            ("generalizations", "gener"),
            ("oscillators", "oscil"),
        ];
        for (word, stem) in cases {
            assert_eq!(porter_stem(word), stem, "{word}");
        }
    }

    #[test]
    fn running_and_runs_share_a_stem() {
        assert_eq!(porter_stem("running"), "run");
        assert_eq!(porter_stem("runs"), "run");
    }

    #[test]
    fn short_and_non_ascii_unchanged() {
        assert_eq!(porter_stem("is"), "is");
        assert_eq!(porter_stem("café"), "café");
    }
}

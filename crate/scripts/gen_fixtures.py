#!/usr/bin/env python3
"""Generate the bundled five-language fixture corpus and its oracle files.

Writes into crates/core/fixtures/:
  corpus/<lang>.jsonl     60 documents per language (10 country articles + 50 filler)
  questions.jsonl         20 questions (4 per language) with gold titles and spans
  translate_map.json      question translations for the reference translator
  bm25_oracle.json        top-10 BM25 rankings computed independently here
  expected_answers.json   answers the reference backends must produce (mono, cross)

Everything is deterministic: rerunning rewrites identical bytes.
"""

import json
import math
import random
import unicodedata
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"
LANGS = ["ar", "bn", "en", "ja", "ru"]
FILLER_DOCS = 50

# country, capital, official language, region; Russian needs the genitive
# country form and a locative region phrase.
COUNTRIES = {
    "en": [
        ("France", "Paris", "French", "Europe"),
        ("Japan", "Tokyo", "Japanese", "Asia"),
        ("Egypt", "Cairo", "Arabic", "Africa"),
        ("Russia", "Moscow", "Russian", "Europe"),
        ("India", "New Delhi", "Hindi", "Asia"),
        ("Brazil", "Brasília", "Portuguese", "South America"),
        ("Canada", "Ottawa", "English", "North America"),
        ("Germany", "Berlin", "German", "Europe"),
        ("China", "Beijing", "Chinese", "Asia"),
        ("Kenya", "Nairobi", "Swahili", "Africa"),
    ],
    "ar": [
        ("فرنسا", "باريس", "الفرنسية", "أوروبا"),
        ("اليابان", "طوكيو", "اليابانية", "آسيا"),
        ("مصر", "القاهرة", "العربية", "أفريقيا"),
        ("روسيا", "موسكو", "الروسية", "أوروبا"),
        ("الهند", "نيودلهي", "الهندية", "آسيا"),
        ("البرازيل", "برازيليا", "البرتغالية", "أمريكا الجنوبية"),
        ("كندا", "أوتاوا", "الإنجليزية", "أمريكا الشمالية"),
        ("ألمانيا", "برلين", "الألمانية", "أوروبا"),
        ("الصين", "بكين", "الصينية", "آسيا"),
        ("كينيا", "نيروبي", "السواحيلية", "أفريقيا"),
    ],
    "bn": [
        ("ফ্রান্স", "প্যারিস", "ফরাসি", "ইউরোপ"),
        ("জাপান", "টোকিও", "জাপানি", "এশিয়া"),
        ("মিশর", "কায়রো", "আরবি", "আফ্রিকা"),
        ("রাশিয়া", "মস্কো", "রুশ", "ইউরোপ"),
        ("ভারত", "নয়াদিল্লি", "হিন্দি", "এশিয়া"),
        ("ব্রাজিল", "ব্রাসিলিয়া", "পর্তুগিজ", "দক্ষিণ আমেরিকা"),
        ("কানাডা", "অটোয়া", "ইংরেজি", "উত্তর আমেরিকা"),
        ("জার্মানি", "বার্লিন", "জার্মান", "ইউরোপ"),
        ("চীন", "বেইজিং", "চীনা", "এশিয়া"),
        ("কেনিয়া", "নাইরোবি", "সোয়াহিলি", "আফ্রিকা"),
    ],
    "ja": [
        ("フランス", "パリ", "フランス語", "ヨーロッパ"),
        ("日本", "東京", "日本語", "アジア"),
        ("エジプト", "カイロ", "アラビア語", "アフリカ"),
        ("ロシア", "モスクワ", "ロシア語", "ヨーロッパ"),
        ("インド", "ニューデリー", "ヒンディー語", "アジア"),
        ("ブラジル", "ブラジリア", "ポルトガル語", "南アメリカ"),
        ("カナダ", "オタワ", "英語", "北アメリカ"),
        ("ドイツ", "ベルリン", "ドイツ語", "ヨーロッパ"),
        ("中国", "北京", "中国語", "アジア"),
        ("ケニア", "ナイロビ", "スワヒリ語", "アフリカ"),
    ],
    "ru": [
        ("Франция", "Париж", "французский", "в Европе", "Франции"),
        ("Япония", "Токио", "японский", "в Азии", "Японии"),
        ("Египет", "Каир", "арабский", "в Африке", "Египта"),
        ("Россия", "Москва", "русский", "в Европе", "России"),
        ("Индия", "Нью-Дели", "хинди", "в Азии", "Индии"),
        ("Бразилия", "Бразилиа", "португальский", "в Южной Америке", "Бразилии"),
        ("Канада", "Оттава", "английский", "в Северной Америке", "Канады"),
        ("Германия", "Берлин", "немецкий", "в Европе", "Германии"),
        ("Китай", "Пекин", "китайский", "в Азии", "Китая"),
        ("Кения", "Найроби", "суахили", "в Африке", "Кении"),
    ],
}


def article(lang, row):
    """Four sentences: region, capital, language, tourism."""
    if lang == "en":
        c, cap, l, r = row
        return [
            f"{c} is a country in {r}.",
            f"The capital of {c} is {cap}.",
            f"The official language of {c} is {l}.",
            f"Many tourists visit {cap} every year.",
        ]
    if lang == "ar":
        c, cap, l, r = row
        return [
            f"{c} دولة في {r}.",
            f"عاصمة {c} هي {cap}.",
            f"اللغة الرسمية في {c} هي {l}.",
            f"يزور كثير من السياح {cap} كل عام.",
        ]
    if lang == "bn":
        c, cap, l, r = row
        return [
            f"{c} {r}-এর একটি দেশ।",
            f"{c}-এর রাজধানী {cap}।",
            f"{c}-এর সরকারি ভাষা {l}।",
            f"প্রতি বছর অনেক পর্যটক {cap} ভ্রমণ করেন।",
        ]
    if lang == "ja":
        c, cap, l, r = row
        return [
            f"{c}は{r}にある国です。",
            f"{c}の首都は{cap}です。",
            f"{c}の公用語は{l}です。",
            f"毎年多くの観光客が{cap}を訪れます。",
        ]
    c, cap, l, r, gen = row
    return [
        f"{c} — это страна {r}.",
        f"Столица {gen} — {cap}.",
        f"Официальный язык {gen} — {l}.",
        f"Каждый год {cap} посещают многие туристы.",
    ]


def questions_for(lang, row):
    """(capital question, language question) for one country."""
    c = row[0]
    return {
        "en": (f"What is the capital of {c}?", f"What is the official language of {c}?"),
        "ar": (f"ما هي عاصمة {c}؟", f"ما هي اللغة الرسمية في {c}؟"),
        "bn": (f"{c}-এর রাজধানী কী?", f"{c}-এর সরকারি ভাষা কী?"),
        "ja": (f"{c}の首都はどこですか？", f"{c}の公用語は何ですか？"),
        "ru": (f"Какая столица {row[-1]}?", f"Какой официальный язык {row[-1]}?"),
    }[lang]


def joiner(lang):
    return "" if lang == "ja" else " "


def terminal(lang):
    return {"bn": "।", "ja": "。"}.get(lang, ".")


# --- filler text -----------------------------------------------------------

SYLLABLES = {
    "en": ["ka", "lo", "mi", "ren", "tos", "vu", "zel", "dra", "pim", "sor", "neth", "gal", "bri", "op", "ul"],
    "ru": ["ка", "ло", "ми", "рен", "тос", "ву", "зел", "дра", "пим", "сор", "неж", "гал", "бри", "оп", "ул"],
    "ar": ["كا", "لو", "مي", "رن", "تس", "فو", "زل", "در", "بم", "سر", "نث", "غل", "بر", "اب", "عل"],
    "bn": ["কা", "লো", "মি", "রেন", "তো", "ভু", "জেল", "দ্র", "পিম", "সোর", "নে", "গাল", "ব্রি", "অপ", "উল"],
    "ja": ["か", "ろ", "み", "れん", "と", "ぶ", "ぜる", "ド", "ピム", "ソル", "ネ", "ガル", "ブリ", "山", "川"],
}

# frequent real words that filler sentences share with the questions, so
# partial matches and ties occur
SHARED = {
    "en": ["the", "of", "is", "a", "in", "country", "capital", "every", "year"],
    "ru": ["это", "страна", "столица", "каждый", "год", "язык"],
    "ar": ["هي", "في", "دولة", "عاصمة", "كل", "عام"],
    "bn": ["একটি", "দেশ", "রাজধানী", "প্রতি", "বছর", "ভাষা"],
    "ja": ["です", "国", "首都", "毎年", "言語"],
}


def make_vocab(rng, lang, size=160):
    words = set()
    while len(words) < size:
        n = rng.choice([1, 2, 2, 3])
        words.add("".join(rng.choice(SYLLABLES[lang]) for _ in range(n)))
    return sorted(words)


def filler_docs(lang, seed):
    rng = random.Random(seed)
    vocab = make_vocab(rng, lang)
    weights = [1.0 / (i + 1) for i in range(len(vocab))]
    docs = []
    for d in range(FILLER_DOCS):
        title_words = rng.sample(vocab[40:], 2)
        title = joiner(lang).join(title_words) if lang == "ja" else " ".join(title_words).title()
        sentences = []
        for _ in range(rng.randint(3, 6)):
            words = rng.choices(vocab, weights=weights, k=rng.randint(4, 10))
            if rng.random() < 0.35:
                words.insert(rng.randrange(len(words)), rng.choice(SHARED[lang]))
            text = joiner(lang).join(words)
            if lang in ("en", "ru"):
                text = text[0].upper() + text[1:]
            sentences.append(text + terminal(lang))
        docs.append({"title": f"{title} {d}" if lang != "ja" else f"{title}{d}", "text": joiner(lang).join(sentences)})
    return docs


# --- oracle reimplementations ----------------------------------------------

CJK_RANGES = [
    (0x3040, 0x30FF), (0x31F0, 0x31FF), (0x3400, 0x4DBF), (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF), (0xFF66, 0xFF9F), (0x1100, 0x11FF), (0x3130, 0x318F),
    (0xAC00, 0xD7AF), (0x20000, 0x2FA1F),
]


def is_cjk(ch):
    o = ord(ch)
    return any(a <= o <= b for a, b in CJK_RANGES)


def is_mark(ch):
    return unicodedata.category(ch).startswith("M")


def is_word(ch):
    return ch.isalnum() or is_mark(ch) or ch in "‌‍"


def tokenize(text):
    norm = unicodedata.normalize("NFKC", text).lower()
    tokens, word, cjk, run = [], [], [], None

    def flush():
        if word:
            tokens.append("".join(word))
            word.clear()
        if len(cjk) == 1:
            tokens.append(cjk[0])
        elif len(cjk) > 1:
            tokens.extend(cjk[i] + cjk[i + 1] for i in range(len(cjk) - 1))
        cjk.clear()

    for ch in norm:
        if is_cjk(ch):
            nxt = "cjk"
        elif is_word(ch):
            if run is None and is_mark(ch):
                continue
            nxt = "word"
        else:
            nxt = None
        if nxt != run:
            flush()
        if nxt == "cjk":
            cjk.append(ch)
        elif nxt == "word":
            word.append(ch)
        run = nxt
    flush()
    return tokens


HARD = {"ar": "؟۔", "bn": "।॥", "ja": "。？！"}


def split_sentences(text, lang):
    """Sentence splitter sufficient for the generated text: no abbreviations,
    quotes or blank lines occur in it."""
    out, start, i, n = [], None, 0, len(text)
    while i < n:
        ch = text[i]
        if start is None:
            if not ch.isspace():
                start = i
            i += 1
            continue
        hard = ch in HARD.get(lang, "")
        if hard or ch in ".!?":
            j = i + 1
            while j < n and (text[j] in ".!?" or text[j] in HARD.get(lang, "")):
                j += 1
            if hard or j == n or text[j].isspace():
                out.append(text[start:j].rstrip())
                start, i = None, j
                continue
        i += 1
    if start is not None:
        out.append(text[start:].rstrip())
    return out


def lexical(q, c):
    qt = set(tokenize(q))
    if not qt:
        return 0.0
    return len(qt & set(tokenize(c))) / len(qt)


class Bm25:
    def __init__(self, docs, k1=1.2, b=0.75):
        self.k1, self.b = k1, b
        self.docs = [tokenize(d["title"] + "\n" + d["text"]) for d in docs]
        self.n = len(self.docs)
        self.avgdl = sum(len(d) for d in self.docs) / self.n
        self.df = {}
        for d in self.docs:
            for t in set(d):
                self.df[t] = self.df.get(t, 0) + 1

    def score(self, query, doc_id):
        d = self.docs[doc_id]
        s = 0.0
        for t in tokenize(query):
            tf = d.count(t)
            if tf == 0:
                continue
            df = self.df[t]
            idf = math.log((self.n - df + 0.5) / (df + 0.5) + 1.0)
            s += idf * tf * (self.k1 + 1) / (tf + self.k1 * (1 - self.b + self.b * len(d) / self.avgdl))
        return s

    def search(self, query, n):
        qt = set(tokenize(query))
        hits = [(i, self.score(query, i)) for i, d in enumerate(self.docs) if qt & set(d)]
        hits.sort(key=lambda h: (-h[1], h[0]))
        return hits[:n]


def ranked_pool(lang, docs, index, query, retrieval_n=100):
    pool = []
    for doc_id, _ in index.search(query, retrieval_n):
        for k, s in enumerate(split_sentences(docs[doc_id]["text"], lang)):
            pool.append((lexical(query, s), lang, doc_id, k, s))
    pool.sort(key=lambda c: (-c[0], c[2], c[3]))
    return pool


# --- assembly --------------------------------------------------------------


def char_offsets(haystack, needle):
    i = haystack.index(needle)
    return {"start": i, "end": i + len(needle)}


def main():
    (OUT / "corpus").mkdir(parents=True, exist_ok=True)
    corpora, indices = {}, {}
    for li, lang in enumerate(LANGS):
        rng = random.Random(1000 + li)
        docs = filler_docs(lang, 2000 + li)
        for ci, row in enumerate(COUNTRIES[lang]):
            body = joiner(lang).join(article(lang, row))
            docs.insert(rng.randrange(len(docs) + 1), {"title": row[0], "text": body, "_country": ci})
        corpora[lang] = docs
        indices[lang] = Bm25(docs)
        with open(OUT / "corpus" / f"{lang}.jsonl", "w", encoding="utf-8") as f:
            for i, d in enumerate(docs):
                f.write(json.dumps({"id": f"{lang}-{i}", "title": d["title"], "text": d["text"]}, ensure_ascii=False) + "\n")

    # two countries per language, both question types; countries rotate so
    # every language asks about different ones
    questions, tmap = [], {l: {} for l in LANGS}
    for li, lang in enumerate(LANGS):
        for ci in (li * 2, li * 2 + 1):
            row = COUNTRIES[lang][ci]
            doc = next(d for d in corpora[lang] if d.get("_country") == ci)
            sents = article(lang, row)
            for kind, (text, gold_sentence) in enumerate(zip(questions_for(lang, row), sents[1:3])):
                q = {
                    "q_id": f"{lang}-{ci}-{'capital' if kind == 0 else 'language'}",
                    "text": text,
                    "lang": lang,
                    "gold_doc_title": row[0],
                    "gold_passage": doc["text"],
                    # alternate the two accepted span encodings
                    "gold_span": char_offsets(doc["text"], gold_sentence) if kind == 0 else gold_sentence,
                    "reference_answer": gold_sentence,
                }
                questions.append(q)
                for other in LANGS:
                    if other != lang:
                        tmap[other][text] = questions_for(other, COUNTRIES[other][ci])[kind]
    with open(OUT / "questions.jsonl", "w", encoding="utf-8") as f:
        for q in questions:
            f.write(json.dumps(q, ensure_ascii=False) + "\n")
    with open(OUT / "translate_map.json", "w", encoding="utf-8") as f:
        json.dump(tmap, f, ensure_ascii=False, indent=1, sort_keys=True)
        f.write("\n")

    # BM25 rankings for every question text and its translations
    oracle = []
    for q in questions:
        for lang in LANGS:
            query = q["text"] if lang == q["lang"] else tmap[lang][q["text"]]
            hits = indices[lang].search(query, 10)
            oracle.append({"lang": lang, "query": query, "ranking": [[d, s] for d, s in hits]})
    with open(OUT / "bm25_oracle.json", "w", encoding="utf-8") as f:
        json.dump(oracle, f, ensure_ascii=False, indent=1)
        f.write("\n")

    # reference backends: translation from the map, lexical ranking,
    # generator returns the first candidate of M
    expected = {}
    for q in questions:
        mono = ranked_pool(q["lang"], corpora[q["lang"]], indices[q["lang"]], q["text"])
        cross = []
        for lang in LANGS:
            query = q["text"] if lang == q["lang"] else tmap[lang][q["text"]]
            cross.extend(ranked_pool(lang, corpora[lang], indices[lang], query)[:2])
        cross.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
        expected[q["q_id"]] = {
            "mono": mono[0][4],
            "mono_score": mono[0][0],
            "cross": cross[0][4],
            "cross_lang": cross[0][1],
            "cross_m_size": len(cross),
        }
    with open(OUT / "expected_answers.json", "w", encoding="utf-8") as f:
        json.dump(expected, f, ensure_ascii=False, indent=1, sort_keys=True)
        f.write("\n")


if __name__ == "__main__":
    main()

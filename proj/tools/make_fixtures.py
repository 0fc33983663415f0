#!/usr/bin/env python3
"""Regenerates tests/fixtures. Output is deterministic; rerun after edits."""

import json
import os
import random
import sys

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "tests", "fixtures")

PERSONS = [["Γεώργιος", "Παπαδόπουλος"], ["Μαρία", "Κωνσταντίνου"], ["Νικόλαος", "Δημητρίου"],
           ["Ελένη", "Γεωργίου"], ["Ιωάννης", "Αθανασίου"], ["Αικατερίνη", "Νικολάου"],
           ["Δημήτριος", "Βασιλείου"], ["Σοφία", "Ιωάννου"]]
ORGS = [["Υπουργείο", "Οικονομικών"], ["Συμβούλιο", "της", "Επικρατείας"], ["Άρειος", "Πάγος"],
        ["Ελεγκτικό", "Συνέδριο"], ["Υπουργείο", "Υγείας"], ["Τράπεζα", "της", "Ελλάδος"]]
GPES = [["Αθήνα"], ["Θεσσαλονίκη"], ["Πάτρα"], ["Ηράκλειο"], ["Λάρισα"], ["Ιωάννινα"]]
FACILITIES = [["Νοσοκομείο", "Ευαγγελισμός"], ["Λιμάνι", "Πειραιά"], ["Αεροδρόμιο", "Μακεδονία"],
              ["Γήπεδο", "Καραϊσκάκη"]]
LOC_NAT = [["Όλυμπος"], ["Πηνειός"], ["Αχελώος"], ["Σαρωνικός"], ["Πίνδος"]]
LOC_UNK = [["οδός", "Σταδίου"], ["πλατεία", "Συντάγματος"], ["περιοχή", "Ρούφ"], ["θέση", "Λάκκα"]]
LEG_REFS = [["ν.", "4412/2016"], ["άρθρο", "5", "του", "Συντάγματος"], ["π.δ.", "80/2016"],
            ["ν.", "2190/1994"], ["άρθρο", "12", "του", "ν.", "3852/2010"]]
PUBLIC_DOCS = [["ΦΕΚ", "Α΄", "147/2016"], ["εγκύκλιος", "Δ1α/ΓΠ/2020"], ["ΦΕΚ", "Β΄", "1234/2019"],
               ["απόφαση", "1234/2021"]]

SLOTS = {"PERSON": PERSONS, "ORG": ORGS, "GPE": GPES, "FACILITY": FACILITIES,
         "LOC-NAT": LOC_NAT, "LOC-UNK": LOC_UNK, "LEG-REF": LEG_REFS, "PUBLIC-DOC": PUBLIC_DOCS}

TEMPLATES = [
    "Ο {PERSON} διορίζεται στο {ORG} σύμφωνα με το {LEG-REF} .",
    "Η έδρα του {ORG} βρίσκεται στην {GPE} .",
    "Με την {PUBLIC-DOC} εγκρίνεται η επέκταση του {FACILITY} .",
    "Η μελέτη αφορά την προστασία του {LOC-NAT} και της {LOC-UNK} .",
    "Κατ᾽ εφαρμογή του {LEG-REF} ο {PERSON} υποβάλλει αίτηση στην {GPE} .",
    "Το {ORG} δημοσίευσε την {PUBLIC-DOC} για το {FACILITY} .",
    "Η διαδρομή από την {GPE} έως τον {LOC-NAT} κλείνει προσωρινά .",
    "Ο δήμος της {GPE} ανακοινώνει έργα στην {LOC-UNK} .",
    "Η προθεσμία του {LEG-REF} παρατείνεται με την {PUBLIC-DOC} .",
    "Η {PERSON} εκπροσωπεί το {ORG} ενώπιον του δικαστηρίου .",
]

LEGAL_LINES = [
    "Άρθρο {n}. Οι διατάξεις του παρόντος εφαρμόζονται από τη δημοσίευσή του στην Εφημερίδα της Κυβερνήσεως.",
    "Η αρμόδια υπηρεσία εκδίδει απόφαση εντός {n} ημερών από την υποβολή της αίτησης.",
    "Κάθε αντίθετη διάταξη καταργείται, εκτός αν ορίζεται διαφορετικά στο άρθρο {n}.",
    "Ο προϊστάμενος της διεύθυνσης ορίζει με πράξη του τους υπαλλήλους της παραγράφου {n}.",
    "Η προθεσμία άσκησης προσφυγής είναι {n} ημέρες από την κοινοποίηση της πράξης.",
    "Με κοινή απόφαση των υπουργών ρυθμίζεται κάθε αναγκαία λεπτομέρεια για την εφαρμογή του άρθρου {n}.",
    "Το πρόστιμο ανέρχεται σε {n} ευρώ για κάθε παράβαση που διαπιστώνεται.",
    "Οι δαπάνες βαρύνουν τον κρατικό προϋπολογισμό και ειδικότερα τον φορέα {n}.",
]

NONLEGAL_LINES = [
    "Ο καιρός αύριο θα είναι αίθριος με θερμοκρασίες έως {n} βαθμούς.",
    "Η ομάδα κέρδισε τον αγώνα με σκορ {n} προς ένα.",
    "Το φεστιβάλ θεάτρου ξεκινά την {n}η Ιουλίου στην αρχαία Επίδαυρο.",
    "Οι τιμές των λαχανικών στη λαϊκή αγορά μειώθηκαν κατά {n} τοις εκατό.",
]

HIERARCHY = {
    "ΔΗΜΟΣΙΑ ΔΙΟΙΚΗΣΗ": {
        "ΔΗΜΟΣΙΟΙ ΥΠΑΛΛΗΛΟΙ": ["ΔΙΟΡΙΣΜΟΣ", "ΠΕΙΘΑΡΧΙΚΟ ΔΙΚΑΙΟ"],
        "ΤΟΠΙΚΗ ΑΥΤΟΔΙΟΙΚΗΣΗ": ["ΔΗΜΟΙ", "ΠΕΡΙΦΕΡΕΙΕΣ"],
    },
    "ΟΙΚΟΝΟΜΙΚΑ": {
        "ΦΟΡΟΛΟΓΙΑ": ["ΦΟΡΟΣ ΕΙΣΟΔΗΜΑΤΟΣ", "ΦΠΑ"],
        "ΤΡΑΠΕΖΕΣ": ["ΠΙΣΤΩΤΙΚΑ ΙΔΡΥΜΑΤΑ", "ΝΟΜΙΣΜΑ"],
    },
    "ΥΓΕΙΑ": {
        "ΝΟΣΟΚΟΜΕΙΑ": ["ΠΡΟΣΩΠΙΚΟ ΝΟΣΟΚΟΜΕΙΩΝ", "ΕΞΟΠΛΙΣΜΟΣ"],
        "ΦΑΡΜΑΚΑ": ["ΤΙΜΟΛΟΓΗΣΗ", "ΑΔΕΙΕΣ ΚΥΚΛΟΦΟΡΙΑΣ"],
    },
}

SUBJECT_WORDS = {
    "ΔΙΟΡΙΣΜΟΣ": ["διορισμός", "υπαλλήλων", "προκήρυξη", "θέσεων"],
    "ΠΕΙΘΑΡΧΙΚΟ ΔΙΚΑΙΟ": ["πειθαρχικό", "παράπτωμα", "ποινή", "αργία"],
    "ΔΗΜΟΙ": ["δήμος", "δημοτικό", "συμβούλιο", "δήμαρχος"],
    "ΠΕΡΙΦΕΡΕΙΕΣ": ["περιφέρεια", "περιφερειάρχης", "αντιπεριφερειάρχης", "νομός"],
    "ΦΟΡΟΣ ΕΙΣΟΔΗΜΑΤΟΣ": ["εισόδημα", "φορολογική", "δήλωση", "κλίμακα"],
    "ΦΠΑ": ["φόρος", "προστιθέμενης", "αξίας", "συντελεστής"],
    "ΠΙΣΤΩΤΙΚΑ ΙΔΡΥΜΑΤΑ": ["τράπεζα", "πιστωτικό", "ίδρυμα", "καταθέσεις"],
    "ΝΟΜΙΣΜΑ": ["νόμισμα", "ευρώ", "κέρματα", "χαρτονομίσματα"],
    "ΠΡΟΣΩΠΙΚΟ ΝΟΣΟΚΟΜΕΙΩΝ": ["ιατροί", "νοσηλευτές", "εφημερίες", "κλινική"],
    "ΕΞΟΠΛΙΣΜΟΣ": ["ιατρικός", "εξοπλισμός", "προμήθεια", "μηχανήματα"],
    "ΤΙΜΟΛΟΓΗΣΗ": ["τιμή", "φαρμάκων", "δελτίο", "τιμών"],
    "ΑΔΕΙΕΣ ΚΥΚΛΟΦΟΡΙΑΣ": ["άδεια", "κυκλοφορίας", "φαρμακευτικό", "προϊόν"],
}

FILLER = ["η", "το", "της", "του", "και", "με", "για", "στην", "από", "ρυθμίζεται", "ορίζεται",
          "απόφαση", "διάταξη", "παράγραφος"]

# windows-1253 bytes with no assigned character.
CP1253_UNASSIGNED = [0x81, 0x88, 0x8A, 0x8C, 0x8D, 0x8E, 0x8F, 0x90, 0x98, 0x9A, 0x9C, 0x9D,
                     0x9E, 0x9F, 0xAA, 0xD2, 0xFF]


def write_bytes(rel, data):
    path = os.path.join(ROOT, rel)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "wb") as f:
        f.write(data)
    return len(data)


def write_text(rel, text):
    return write_bytes(rel, text.encode("utf-8"))


def fill(template, rng):
    tokens, tags = [], []
    for piece in template.split(" "):
        if piece.startswith("{") and piece.endswith("}"):
            etype = piece[1:-1]
            words = rng.choice(SLOTS[etype])
            for i, w in enumerate(words):
                tokens.append(w)
                tags.append(("B-" if i == 0 else "I-") + etype)
        else:
            tokens.append(piece)
            tags.append("O")
    return tokens, tags


def legal_lines(rng, count, pool):
    return [rng.choice(pool).format(n=rng.randint(1, 99)) for _ in range(count)]


def make_corpus(rng):
    entries = []
    docs = [
        ("gazette", "gazette_utf8.txt", "utf-8", "legal", legal_lines(rng, 40, LEGAL_LINES)),
        ("decisions", "decisions_cp1253.txt", "windows-1253", "legal", legal_lines(rng, 40, LEGAL_LINES)),
        ("circulars", "circulars_iso8859_7.txt", "iso-8859-7", "legal", legal_lines(rng, 40, LEGAL_LINES)),
        ("news", "news_utf8.txt", "utf-8", "non-legal", legal_lines(rng, 20, NONLEGAL_LINES)),
    ]
    for name, fname, enc, ctx, lines in docs:
        text = "\n".join(lines) + "\n"
        codec = {"utf-8": "utf-8", "windows-1253": "cp1253", "iso-8859-7": "iso8859_7"}[enc]
        size = write_bytes("corpus/" + fname, text.encode(codec))
        entries.append(f"{name}\t{fname}\t{enc}\t{ctx}\t{size}")
    write_text("corpus/manifest.tsv", "# name\tpath\tencoding\tcontext\tsize_bytes\n" +
               "\n".join(entries) + "\n")

    # One clean document and one with ~2% unassigned windows-1253 bytes.
    clean = ("\n".join(legal_lines(rng, 10, LEGAL_LINES)) + "\n").encode("cp1253")
    bad = bytearray(("\n".join(legal_lines(rng, 20, LEGAL_LINES)) + "\n").encode("cp1253"))
    for i in range(0, len(bad), 50):
        if bad[i] != 0x0A:
            bad[i] = CP1253_UNASSIGNED[(i // 50) % len(CP1253_UNASSIGNED)]
    n1 = write_bytes("corrupt/clean.txt", clean)
    n2 = write_bytes("corrupt/damaged.txt", bytes(bad))
    write_text("corrupt/manifest.tsv", f"clean\tclean.txt\twindows-1253\tlegal\t{n1}\n"
               f"damaged\tdamaged.txt\twindows-1253\tlegal\t{n2}\n")

    write_text("missing/manifest.tsv", "absent\tno_such_file.txt\tutf-8\tlegal\t-\n")


def make_convergence(rng):
    lines = legal_lines(rng, 12, LEGAL_LINES) + legal_lines(rng, 4, NONLEGAL_LINES)
    lines.append("ΆΈΉΊΌΎΏ άέήίόύώ ϊϋΐΰ ΪΫ «Ο ΝΟΜΟΣ» - ΦΕΚ Α΄ 1/2020; § 3")
    text = "\n".join(lines) + "\n"
    for fname, codec in [("text.utf8.txt", "utf-8"), ("text.cp1253.txt", "cp1253"),
                         ("text.iso8859_7.txt", "iso8859_7")]:
        write_bytes("convergence/" + fname, text.encode(codec))


def make_pretrain(rng):
    lines = legal_lines(rng, 100, LEGAL_LINES)
    write_text("pretrain_100.txt", "\n".join(lines) + "\n")


def pseudo_word(rng):
    onsets = ["", "κ", "τ", "π", "μ", "ν", "λ", "ρ", "σ", "δ", "γ", "θ", "χ", "φ", "β", "ζ", "ξ",
              "στ", "πρ", "τρ", "κρ", "γρ", "δρ", "φθ", "σκ", "μπ", "ντ", "γκ"]
    vowels = ["α", "ε", "η", "ι", "ο", "υ", "ω", "ά", "έ", "ή", "ί", "ό", "ύ", "ώ", "αι", "ει",
              "οι", "ου", "αυ", "ευ"]
    codas = ["", "", "", "ς", "ν", "ρ", "σ"]
    return "".join(rng.choice(onsets) + rng.choice(vowels) for _ in range(rng.randint(2, 4))) + \
        rng.choice(codas)


def make_bpe_corpus(rng):
    vocab = [pseudo_word(rng) for _ in range(3000)]
    lines = []
    for _ in range(4000):
        words = [rng.choice(vocab) for _ in range(rng.randint(6, 14))]
        if rng.random() < 0.3:
            words.append(str(rng.randint(1, 9999)) + "/" + str(rng.randint(1990, 2024)))
        lines.append(" ".join(words) + ".")
    write_text("bpe_corpus.txt", "\n".join(lines) + "\n")


def make_ner(rng):
    out = []
    for i in range(50):
        tokens, tags = fill(TEMPLATES[i % len(TEMPLATES)], rng)
        out.append("\n".join(f"{t}\t{g}" for t, g in zip(tokens, tags)))
    write_text("ner_50.iob", "\n\n".join(out) + "\n")


def make_cls(rng):
    rows = []
    for vol, chapters in HIERARCHY.items():
        for ch, subjects in chapters.items():
            for sub in subjects:
                rows.append(f"{vol}\t{ch}\t{sub}")
    write_text("hierarchy.tsv", "\n".join(rows) + "\n")

    records = []
    for i in range(120):
        vol = list(HIERARCHY)[i % 3]
        ch = list(HIERARCHY[vol])[(i // 3) % 2]
        sub = HIERARCHY[vol][ch][(i // 6) % 2]
        words = [rng.choice(SUBJECT_WORDS[sub]) for _ in range(5)] + \
            [rng.choice(FILLER) for _ in range(5)]
        rng.shuffle(words)
        text = " ".join(words).capitalize() + "."
        records.append(json.dumps({"text": text, "volume": vol, "chapter": ch, "subject": sub},
                                  ensure_ascii=False))
    write_text("cls.jsonl", "\n".join(records) + "\n")


def make_results(rng):
    types = ["F", "GPE", "LR", "LN", "LU", "ORG", "P", "PD", "micro", "macro", "weighted"]
    header = ["model", "task", "epochs", "learning_rate", "batch_size", "seed"] + \
        ["val." + t for t in types] + ["test." + t for t in types]
    lines = ["\t".join(header)]
    for model in ["nomos-tiny", "nomos-base"]:
        for seed in range(5):
            vals = [f"{rng.uniform(60, 95):.2f}" for _ in types]
            tests = [f"{rng.uniform(60, 95):.2f}" for _ in types]
            lines.append("\t".join([model, "ner", "3", "5e-05", "8", str(seed)] + vals + tests))
    write_text("results_5seed.tsv", "\n".join(lines) + "\n")


def make_smoke_config():
    cfg = {
        "seed": 7,
        "tokenizer": {"vocab_size": 400},
        "model": {"num_layers": 1, "hidden_dim": 32, "num_heads": 2, "ffn_dim": 64,
                  "max_positions": 64},
        "pretrain": {"steps": 30, "batch_size": 4, "peak_lr": 0.001, "warmup_steps": 5,
                     "log_every": 10, "max_len": 48},
        "finetune": {"task": "ner", "epochs": 2, "learning_rate": 0.001, "batch_size": 8,
                     "max_len": 48, "seeds": [1, 2]},
        "grid": {"epochs": [1, 2], "learning_rates": [0.0005, 0.001], "batch_sizes": [8]},
        "data": {"manifest": "corpus/manifest.tsv", "ner": "ner_50.iob",
                 "classification": "cls.jsonl", "hierarchy": "hierarchy.tsv"},
    }
    write_text("smoke.json", json.dumps(cfg, ensure_ascii=False, indent=2) + "\n")


def main():
    rng = random.Random(20240611)
    make_corpus(rng)
    make_convergence(rng)
    make_pretrain(rng)
    make_bpe_corpus(rng)
    make_ner(rng)
    make_cls(rng)
    make_results(rng)
    make_smoke_config()
    return 0


if __name__ == "__main__":
    sys.exit(main())

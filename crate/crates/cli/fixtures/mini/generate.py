#!/usr/bin/env python3
"""Regenerates the mini ontology and mini corpus in this directory.

Output is deterministic: a fixed seed, no timestamps. Run from anywhere:

    python3 crates/cli/fixtures/mini/generate.py
"""

import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))

# (ontology, local id, primary name, synonyms)
CONCEPTS = [
    ("Uniprot", "P01375", "Tumor necrosis factor", ["TNF alpha", "TNF-alpha", "cachectin", "TNFa"]),
    ("Uniprot", "P27930", "Interleukin-1 receptor type 2", ["IL-1R-2", "IL-1RT-2", "IL1R2", "interleukin-1 receptor beta"]),
    ("Uniprot", "Q9UBK2", "Peroxisome proliferator-activated receptor gamma coactivator 1-alpha", ["PGC-1-alpha", "PPARGC-1-alpha", "PGC-1alpha"]),
    ("Uniprot", "P04040", "Catalase", ["CAT"]),
    ("Uniprot", "P05231", "Interleukin-6", ["IL-6", "B-cell stimulatory factor 2", "interferon beta-2"]),
    ("Uniprot", "P01584", "Interleukin-1 beta", ["IL-1 beta", "catabolin"]),
    ("Uniprot", "P37231", "Peroxisome proliferator-activated receptor gamma", ["PPAR-gamma", "nuclear receptor subfamily 1 group C member 3"]),
    ("Uniprot", "P04637", "Cellular tumor antigen p53", ["tumor suppressor p53", "phosphoprotein p53"]),
    ("Uniprot", "P68871", "Hemoglobin subunit beta", ["beta-globin", "hemoglobin beta chain"]),
    ("Uniprot", "Q8N6T7", "Ligand effect modulator 6", ["NAD-dependent protein deacetylase sirtuin-6"]),
    ("Uniprot", "P00533", "Epidermal growth factor receptor", ["EGFR", "receptor tyrosine-protein kinase erbB-1"]),
    ("ChEBI", "17245", "carbon monoxide", ["CO"]),
    ("ChEBI", "16236", "ethanol", ["ethyl alcohol", "EtOH"]),
    ("ChEBI", "15422", "ATP", ["adenosine 5'-triphosphate", "adenosine triphosphate"]),
    ("ChEBI", "27732", "caffeine", ["1,3,7-trimethylxanthine", "guaranine"]),
    ("ChEBI", "16113", "cholesterol", ["cholest-5-en-3beta-ol"]),
    ("ChEBI", "17234", "glucose", ["D-glucose", "dextrose"]),
    ("ChEBI", "29432", "methanylylidene group", ["CH"]),
    ("ChEBI", "16240", "hydrogen peroxide", ["H2O2", "perhydrol"]),
    ("ChEBI", "50505", "sulphasalazine", ["salazosulfapyridine"]),
    ("MeSH", "D002248", "Carbon Monoxide", ["monoxide, carbon"]),
    ("MeSH", "D003920", "Diabetes Mellitus", ["diabetes"]),
    ("MeSH", "D006943", "Hyperglycemia", ["hyperglycaemia"]),
    ("MeSH", "D000740", "Anemia", ["anaemia"]),
    ("MeSH", "D004487", "Edema", ["oedema", "dropsy"]),
    ("MeSH", "D009369", "Neoplasms", ["tumour", "tumor", "cancer"]),
    ("MeSH", "D007249", "Inflammation", ["innate inflammatory response"]),
    ("MeSH", "D000758", "Anesthesia", ["anaesthesia"]),
    ("MeSH", "D002415", "Cats", ["Felis catus", "domestic cat"]),
    ("ICD-10", "X47", "Accidental poisoning by and exposure to other gases and vapours", ["carbon monoxide", "helium", "utility gas"]),
    ("ICD-10", "E11", "Type 2 diabetes mellitus", ["non-insulin-dependent diabetes mellitus", "diabetes"]),
    ("ICD-10", "J45", "Asthma", ["allergic asthma"]),
    ("ICD-10", "I10", "Essential hypertension", ["high blood pressure"]),
    ("ICD-10", "D50", "Iron deficiency anaemia", ["sideropenic anaemia"]),
    ("ICD-10", "C34", "Malignant neoplasm of bronchus and lung", ["lung cancer"]),
    ("ICD-10", "G43", "Migraine", ["sick headache"]),
    ("DrugBank", "DB11588", "Carbon monoxide", ["carbon monox", "CO"]),
    ("DrugBank", "DB00945", "Acetylsalicylic acid", ["aspirin", "ASA"]),
    ("DrugBank", "DB00316", "Acetaminophen", ["paracetamol", "APAP"]),
    ("DrugBank", "DB00201", "Caffeine", ["guaranine"]),
    ("DrugBank", "DB01050", "Ibuprofen", ["isobutylphenylpropanoic acid"]),
    ("DrugBank", "DB00331", "Metformin", ["dimethylbiguanide"]),
    ("DrugBank", "DB00898", "Ethanol", ["alcohol", "ethyl alcohol"]),
    ("GO", "0016210", "naringenin-chalcone synthase activity", ["CH", "chalcone synthase activity"]),
    ("GO", "0006954", "inflammatory response", ["inflammation"]),
    ("GO", "0006915", "apoptotic process", ["apoptosis", "programmed cell death by apoptosis"]),
    ("GO", "0006096", "glycolytic process", ["glycolysis"]),
    ("GO", "0004096", "catalase activity", ["CAT activity"]),
    ("GO", "0008283", "cell population proliferation", ["cell proliferation"]),
    ("GO", "0005739", "mitochondrion", ["mitochondria"]),
]

# Extra surface forms used in the corpus that are not original names.
SPELLINGS = {
    "P01375": ["TNF α", "TNF-α", "TNFα", "tumour necrosis factor alpha", "tumor necrosis factor-alpha"],
    "P27930": ["interleukin 1 receptor type II", "interleukin-1-receptor type-ii", "IL-1 receptor type 2"],
    "Q9UBK2": ["PGC-1α", "PPARGC1 alpha"],
    "Q8N6T7": ["ligand effect modulator VI", "ligand effect modulator-6"],
    "D006943": ["hyperglycaemic"],
    "D000758": ["anaesthesia"],
    "0006915": ["apoptoses"],
}

FILLER = [
    "Results were consistent across cohorts.",
    "The cat was kept indoors during the study.",
    "Samples were stored at -80 degrees.",
    "No adverse events were reported.",
    "Data are presented as mean values.",
    "A co-author reviewed the protocol.",
    "Patients gave written consent.",
    "Statistical significance was set at 0.05.",
]

TEMPLATES = [
    "We measured {a} in patients with {b}.",
    "Levels of {a} increased after exposure to {b}.",
    "{a} was associated with {b} (n = {n}).",
    "Inhibition of {a} reduced {b} in vitro.",
    "The role of {a} in {b} remains unclear.",
    "{a} and {b} were quantified by ELISA.",
]


def escape(field):
    return field.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("|", "\\|")


def write_ontologies():
    by_ontology = {}
    for c in CONCEPTS:
        by_ontology.setdefault(c[0], []).append(c)
    for ontology, rows in by_ontology.items():
        path = os.path.join(HERE, "ontology", ontology.lower().replace("-", "") + ".tsv")
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as out:
            out.write("# generated by generate.py\n")
            for o, local, primary, syns in rows:
                out.write("\t".join([o, escape(local), escape(primary), "|".join(escape(s) for s in syns)]) + "\n")


def surfaces():
    forms = []
    for _, local, primary, syns in CONCEPTS:
        forms.append(primary)
        forms.extend(syns)
        forms.extend(SPELLINGS.get(local, []))
    return forms


def write_corpus(n_docs=200, seed=20180420):
    rng = random.Random(seed)
    forms = surfaces()
    path = os.path.join(HERE, "corpus.tsv")
    with open(path, "w", encoding="utf-8", newline="\n") as out:
        for i in range(n_docs):
            sentences = []
            for _ in range(rng.randint(2, 5)):
                if rng.random() < 0.25:
                    sentences.append(rng.choice(FILLER))
                else:
                    t = rng.choice(TEMPLATES)
                    sentences.append(t.format(a=rng.choice(forms), b=rng.choice(forms), n=rng.randint(10, 900)))
            text = " ".join(s[0].upper() + s[1:] if s[0].islower() and rng.random() < 0.5 else s for s in sentences)
            out.write(f"PMID{100000 + i}\tmini\t{escape(text)}\n")


if __name__ == "__main__":
    write_ontologies()
    write_corpus()

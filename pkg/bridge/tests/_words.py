"""Word material for the tiny test model's vocabulary."""

# single-token words available to tests; "##s"/"##n" let words like "altos" split
WORDS = [
    "o", "a", "os", "as", "que", "é", "e", "non", "na", "casa",
    "neno", "nena", "nenos", "nenas", "alto", "alta", "baixo", "baixa",
    "canta", "cantan", "cantaba", "aparece", "aparecen", "dorme", "dormen",
    "onte", "alí", "praza", "vella", "río", ".", ",",
]
SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]

import os

import yaml

LANGS_DIR = os.path.join(os.path.dirname(__file__), "langs")

languages = {}


def get_string(lang: str):
    return languages.get(lang, languages["en"])


for filename in sorted(os.listdir(LANGS_DIR)):
    if not filename.endswith(".yml"):
        continue
    with open(os.path.join(LANGS_DIR, filename), encoding="utf8") as f:
        languages[filename[:-4]] = yaml.safe_load(f)

# missing keys fall back to English
for name, table in languages.items():
    for item in languages["en"]:
        table.setdefault(item, languages["en"][item])

"""The 12-theme taxonomy for online activities, with static theory metadata.

Each theme belongs to one of five categories and is annotated with the
risk-model phase and the social-norm type it transgresses. The letter maps
translate the forced-choice multiple-choice answers of the three theme
prompts into themes; letters outside a map mean "no theme".
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Category(str, Enum):
    HARM_TO_SELF = "HarmToSelf"
    HARM_TO_OTHERS = "HarmToOthers"
    INTERPERSONAL = "Interpersonal"
    ACTIVITY_LEVELS = "ActivityLevels"
    LIFE_EVENTS = "LifeEvents"


class ImvPhase(str, Enum):
    PRE_MOTIVATIONAL = "PreMotivational"
    MOTIVATIONAL = "Motivational"
    VOLITIONAL = "Volitional"


class DurkheimNorm(str, Enum):
    INTEGRATION = "Integration"
    REGULATION = "Regulation"
    BOTH = "Both"


@dataclass(frozen=True)
class ThemeLabel:
    name: str
    category: Category
    imv_phase: ImvPhase
    durkheim_norm: DurkheimNorm

    def __str__(self) -> str:
        return self.name


_T = ThemeLabel

GRAPHIC_DISCLOSURE = _T("GraphicDisclosure", Category.HARM_TO_SELF, ImvPhase.VOLITIONAL, DurkheimNorm.REGULATION)
DISCLOSURE = _T("Disclosure", Category.HARM_TO_SELF, ImvPhase.VOLITIONAL, DurkheimNorm.REGULATION)
SELF_HARM_CONTENT = _T("SelfHarmContent", Category.HARM_TO_SELF, ImvPhase.VOLITIONAL, DurkheimNorm.REGULATION)
PERPETRATOR = _T("Perpetrator", Category.HARM_TO_OTHERS, ImvPhase.VOLITIONAL, DurkheimNorm.REGULATION)
VICTIM = _T("Victim", Category.HARM_TO_OTHERS, ImvPhase.VOLITIONAL, DurkheimNorm.REGULATION)
OTHER_HARM_CONTENT = _T("OtherHarmContent", Category.HARM_TO_OTHERS, ImvPhase.VOLITIONAL, DurkheimNorm.REGULATION)
ONLINE_CONFLICT = _T("OnlineConflict", Category.INTERPERSONAL, ImvPhase.MOTIVATIONAL, DurkheimNorm.INTEGRATION)
PERSONAL_SHARING = _T("PersonalSharing", Category.INTERPERSONAL, ImvPhase.MOTIVATIONAL, DurkheimNorm.INTEGRATION)
ONLINE_RELATIONSHIPS = _T("OnlineRelationships", Category.INTERPERSONAL, ImvPhase.MOTIVATIONAL, DurkheimNorm.INTEGRATION)
WITHDRAWING_OR_LOW_USE = _T("WithdrawingOrLowUse", Category.ACTIVITY_LEVELS, ImvPhase.MOTIVATIONAL, DurkheimNorm.INTEGRATION)
INTENSIFYING_OR_HIGH_USE = _T("IntensifyingOrHighUse", Category.ACTIVITY_LEVELS, ImvPhase.MOTIVATIONAL, DurkheimNorm.INTEGRATION)
PROBLEMS_WITH_ONLINE_SCHOOL = _T("ProblemsWithOnlineSchool", Category.LIFE_EVENTS, ImvPhase.PRE_MOTIVATIONAL, DurkheimNorm.BOTH)

ALL_THEMES = (
    GRAPHIC_DISCLOSURE,
    DISCLOSURE,
    SELF_HARM_CONTENT,
    PERPETRATOR,
    VICTIM,
    OTHER_HARM_CONTENT,
    ONLINE_CONFLICT,
    PERSONAL_SHARING,
    ONLINE_RELATIONSHIPS,
    WITHDRAWING_OR_LOW_USE,
    INTENSIFYING_OR_HIGH_USE,
    PROBLEMS_WITH_ONLINE_SCHOOL,
)

THEME_NAMES = tuple(t.name for t in ALL_THEMES)
THEMES_BY_NAME = {t.name: t for t in ALL_THEMES}


def theme(name: str) -> ThemeLabel:
    try:
        return THEMES_BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown theme name: {name!r}") from None


# Forced-choice option alphabets and letter -> theme maps, one per prompt.
# Unmapped letters inside the alphabet select "no theme".
HARM_ALPHABET = tuple("ABCDEFGHIJKLMNOPQRST")
HARM_LETTER_MAP = {
    "A": DISCLOSURE,
    "B": GRAPHIC_DISCLOSURE,
    "C": GRAPHIC_DISCLOSURE,
    "D": GRAPHIC_DISCLOSURE,
    "E": SELF_HARM_CONTENT,
    "F": PERPETRATOR,
    "I": VICTIM,
    "J": VICTIM,
    "K": PERPETRATOR,
    "L": PERPETRATOR,
    "M": SELF_HARM_CONTENT,
    "N": SELF_HARM_CONTENT,
    "O": SELF_HARM_CONTENT,
    "P": OTHER_HARM_CONTENT,
    "Q": OTHER_HARM_CONTENT,
}

INTERPERSONAL_ALPHABET = tuple("ABCDEFGHIJKLMNOPQRS")
INTERPERSONAL_LETTER_MAP = {
    "E": ONLINE_CONFLICT,
    "F": ONLINE_CONFLICT,
    "G": ONLINE_CONFLICT,
    "H": PERSONAL_SHARING,
    "J": PERSONAL_SHARING,
    "K": PERSONAL_SHARING,
    "N": ONLINE_RELATIONSHIPS,
    "O": ONLINE_RELATIONSHIPS,
}

ACTIVITY_ALPHABET = tuple("ABCDEFGHIJKLMNOPQRSTU")
ACTIVITY_LETTER_MAP = {
    "B": INTENSIFYING_OR_HIGH_USE,
    "C": INTENSIFYING_OR_HIGH_USE,
    "D": INTENSIFYING_OR_HIGH_USE,
    "E": INTENSIFYING_OR_HIGH_USE,
    "F": INTENSIFYING_OR_HIGH_USE,
    "I": PROBLEMS_WITH_ONLINE_SCHOOL,
    "J": WITHDRAWING_OR_LOW_USE,
    "O": WITHDRAWING_OR_LOW_USE,
    "P": WITHDRAWING_OR_LOW_USE,
}


class SourceOfInformation(str, Enum):
    """Where investigators got their knowledge of the decedent's online life."""

    LE_SEARCHES = "LeSearches"
    NOK_EXPLICIT = "NokExplicit"
    NOK_IMPLICIT = "NokImplicit"
    UNKNOWN = "Unknown"


# Case-level resolution order when units disagree (most specific first).
SOURCE_PRIORITY = (
    SourceOfInformation.LE_SEARCHES,
    SourceOfInformation.NOK_EXPLICIT,
    SourceOfInformation.NOK_IMPLICIT,
    SourceOfInformation.UNKNOWN,
)


# Technology kinds derived from the online-detection phrase lists.
# Patterns follow keyphrase syntax (trailing * = word-prefix wildcard);
# the first matching kind wins, anything unmatched is "other".
DEFAULT_TECHNOLOGY_KINDS = (
    ("messaging", ("text*", "messag*", "chat*", "sms", "email*", "dm", "dms")),
    ("social media", ("social media", "post*", "facebook", "instagram", "snapchat", "tiktok", "twitter")),
    ("gaming", ("gam*", "video gam*", "xbox", "playstation")),
    ("device", ("phone*", "cellphone*", "computer*", "laptop*", "tablet*", "ipad", "device*", "browser*")),
)

TECHNOLOGY_KIND_NAMES = ("messaging", "social media", "gaming", "device", "other")

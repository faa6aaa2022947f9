"""Hand-traced rule-table regression cases.

Each case is (name, TripleContext, expected rule number or None, expected
label). The expected values were traced by hand against the rule table in
its printed order, including boundary cases (t_start equal to the old
snapshot timestamp, inverted intervals) and contexts matching the
conditions of rules that earlier rules shadow.
"""
from datetime import date

from factdiff.classify import TripleContext
from factdiff.diff import GroupStats, Membership
from factdiff.model import Label, NEG_INF, POS_INF

T_OLD = date(2021, 1, 4)
T_NEW = date(2023, 2, 27)


def ctx(membership=Membership.BOTH, start=NEG_INF, end=POS_INF,
        n_minus=1, n_zero=0, n_plus=1, e_plus=False, in_f_minus=True,
        death=False, tf=False, obj_e_plus=False, obj_date=None) -> TripleContext:
    return TripleContext(
        membership=membership,
        t_start=start,
        t_end=end,
        stats=GroupStats(n_minus, n_zero, n_plus),
        subject_in_e_plus=e_plus,
        subject_in_f_minus=in_f_minus,
        relation_is_death=death,
        relation_is_temporal_functional=tf,
        object_in_e_plus=obj_e_plus,
        object_date=obj_date,
    )


RULE_CASES = [
    ("new-entity subject wins over everything",
     ctx(e_plus=True, death=True), 1, Label.NEW),
    ("subject absent from old-only triples",
     ctx(in_f_minus=False), 2, Label.UNKNOWN),
    ("death: lone new-side triple dated in window",
     ctx(Membership.NEW_ONLY, n_minus=0, n_plus=1, death=True,
         obj_date=date(2022, 1, 1)), 3, Label.NEW),
    ("death: date before the window",
     ctx(Membership.NEW_ONLY, n_minus=0, n_plus=1, death=True,
         obj_date=date(2020, 1, 1)), 4, Label.UNKNOWN),
    ("death: old-side triple",
     ctx(Membership.OLD_ONLY, death=True, obj_date=date(2022, 1, 1)),
     4, Label.UNKNOWN),
    ("inverted interval",
     ctx(start=date(2022, 5, 1), end=date(2021, 5, 1)), 5, Label.UNKNOWN),
    ("temporal-functional replacement pair, open ended",
     ctx(Membership.NEW_ONLY, start=date(2022, 1, 1), tf=True), 6, Label.NEW),
    ("temporal-functional pair still valid past t_new (rule 7 shadowed by 6)",
     ctx(Membership.NEW_ONLY, start=date(2022, 1, 1), end=date(2024, 1, 1),
         tf=True), 6, Label.NEW),
    ("rule 8 shape is an inverted interval (shadowed by 5)",
     ctx(Membership.NEW_ONLY, start=date(2022, 1, 1), end=date(2020, 1, 1),
         n_minus=0, n_plus=1), 5, Label.UNKNOWN),
    ("open ended, started before t_old",
     ctx(start=date(2019, 1, 1)), 9, Label.STATIC),
    ("no temporal qualifiers at all",
     ctx(), 9, Label.STATIC),
    ("open ended, started inside the window",
     ctx(Membership.NEW_ONLY, start=date(2021, 6, 1), n_minus=0, n_plus=1),
     10, Label.NEW),
    ("open ended in-window start on a both-sides triple",
     ctx(Membership.BOTH, start=date(2021, 6, 1), n_minus=0, n_zero=1,
         n_plus=0, tf=True), 10, Label.NEW),
    ("starts after t_new",
     ctx(start=date(2023, 6, 1)), 11, Label.IGNORE),
    ("started and ended inside the window (rule 12 shadowed by 11)",
     ctx(Membership.OLD_ONLY, start=date(2021, 6, 1), end=date(2022, 6, 1)),
     11, Label.IGNORE),
    ("started before t_old, ended inside the window",
     ctx(start=date(2019, 1, 1), end=date(2022, 1, 1)), 13, Label.OBSOLETE),
    ("started before t_old, ends after t_new",
     ctx(start=date(2019, 1, 1), end=date(2024, 1, 1)), 14, Label.STATIC),
    ("no start means started before t_old, ended inside the window",
     ctx(Membership.OLD_ONLY, end=date(2022, 1, 1)), 13, Label.OBSOLETE),
    ("no start means started before t_old, ends after t_new",
     ctx(end=date(2024, 1, 1)), 14, Label.STATIC),
    ("old-only, ended before t_old",
     ctx(Membership.OLD_ONLY, end=date(2020, 1, 1)), 17, Label.IGNORE),
    ("new-side triple about a new entity, otherwise unmatchable",
     ctx(Membership.NEW_ONLY, end=date(2020, 6, 1), n_minus=0, n_plus=1,
         obj_e_plus=True), 18, Label.NEW),
    ("new-only with no qualifiers classifies by interval, not membership",
     ctx(Membership.NEW_ONLY, n_minus=0, n_plus=1), 9, Label.STATIC),
    ("both-sides triple ended before t_old: nothing fires",
     ctx(Membership.BOTH, end=date(2020, 1, 1), n_zero=1), None, Label.UNKNOWN),
    ("boundary: t_start equals t_old, open ended",
     ctx(start=T_OLD), 16, Label.STATIC),
    ("boundary: t_start equals t_old, ended inside the window",
     ctx(Membership.OLD_ONLY, start=T_OLD, end=date(2022, 1, 1)),
     15, Label.OBSOLETE),
    ("boundary: t_end equals t_new",
     ctx(Membership.BOTH, start=date(2019, 1, 1), end=T_NEW, n_zero=1),
     None, Label.UNKNOWN),
    ("boundary: t_end equals t_old",
     ctx(Membership.OLD_ONLY, end=T_OLD), None, Label.UNKNOWN),
    ("degenerate in-window point interval",
     ctx(Membership.OLD_ONLY, start=date(2022, 1, 1), end=date(2022, 1, 1)),
     11, Label.IGNORE),
    ("death: two new-side triples",
     ctx(Membership.NEW_ONLY, n_minus=0, n_plus=2, death=True,
         obj_date=date(2022, 1, 1)), 4, Label.UNKNOWN),
    ("boundary: temporal-functional pair starting exactly at t_old",
     ctx(Membership.NEW_ONLY, start=T_OLD, tf=True), 16, Label.STATIC),
]

#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Manage candidate attributes as a SKOS thesaurus, based on using `RDFlib`:
concepts carry a preferred label (the candidate phrase), alternative labels
(near-synonyms), and optionally the world axis they describe.

see copyright/license in README.md
"""

import logging
import pathlib
import typing

from rdflib.namespace import DC, PROV, RDF, SKOS, XSD
import rdflib

from .analysis import AttributeScore, CandidateBank, DiagnosisReport
from .errors import FormatError
from .namespace import CF
from .util import KeyValueStore


class Thesaurus:
    """
    Candidate attributes organized as a thesaurus: each `skos:Concept` is
    one candidate, its `skos:altLabel`s the near-synonyms used to validate
    uniqueness-weighted selection.
    """

    CF_PREFIX: str = "cf:"

    RDF_PREAMBLE: str = """\
@prefix cf:       <urn:cf-diagnosis:ns#> .

@prefix dc:       <http://purl.org/dc/elements/1.1/> .
@prefix prov:     <http://www.w3.org/ns/prov#> .
@prefix rdf:      <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
@prefix skos:     <http://www.w3.org/2004/02/skos/core#> .
@prefix xsd:      <http://www.w3.org/2001/XMLSchema#> .
"""

    def __init__(
        self,
        *,
        kv_store: KeyValueStore = KeyValueStore(),
    ) -> None:
        """
        Constructor.

        This expects the `load_source()` method will be used to load the
        thesaurus directly after constructing an instance.
        """
        self.logger = logging.getLogger(__name__)
        self.labels: dict[str, typing.Any] = kv_store.allocate()

        self.rdf_graph: rdflib.Graph = rdflib.Graph(bind_namespaces="rdflib")
        self.rdf_graph.bind("dc", DC)
        self.rdf_graph.bind("prov", PROV)
        self.rdf_graph.bind("skos", SKOS)
        self.rdf_graph.bind("cf", CF)

    def load_source(
        self,
        source: typing.Any,
        *,
        format: str = "turtle",  # pylint: disable=W0622
    ) -> None:
        """
        Load triples from a data source.
        """
        try:
            self.rdf_graph.parse(
                source,
                format=format,
            )
        except (SyntaxError, ValueError) as ex:
            raise FormatError(f"cannot parse thesaurus {source}: {ex}") from ex

    def load_source_text(
        self,
        source: str,
        *,
        format: str = "turtle",  # pylint: disable=W0622
    ) -> None:
        """
        Load triples from a string as the data source, which in `RDFlib`
        requires a different calling format.
        """
        self.rdf_graph.parse(
            data=source,
            format=format,
        )

    def save_source(
        self,
        rdf_path: pathlib.Path,
        *,
        format: str = "turtle",  # pylint: disable=W0622
        encoding: str = "utf-8",
    ) -> None:
        """
        Serialize triples to a file.
        """
        with open(pathlib.Path(rdf_path).resolve(), "w", encoding=encoding) as fp:
            fp.write(
                self.rdf_graph.serialize(
                    format=format,
                )
            )

    def n3(
        self,
        uri: rdflib.term.URIRef,
    ) -> str:
        """
        Normalize IRI prefixes to N3 "Turtle" format.
        """
        return uri.n3(self.rdf_graph.namespace_manager)

    @classmethod
    def literal(
        cls,
        text: str,
        *,
        lang: str | None = None,
    ) -> str:
        """
        N3 form of a string literal. rdflib escapes quotes, backslashes and
        line breaks, so any label survives the Turtle round trip.
        """
        return rdflib.Literal(text.strip(), lang=lang).n3()

    ######################################################################
    # candidate concepts

    def concepts(
        self,
    ) -> list[rdflib.term.Node]:
        """
        Candidate concepts in a stable order: by `cf:order` when present,
        then by IRI.
        """
        found: list[tuple[int, str, rdflib.term.Node]] = []

        for node in self.rdf_graph.subjects(RDF.type, SKOS.Concept):
            order_lit: typing.Any = self.rdf_graph.value(node, CF.order)
            order: int = int(order_lit) if order_lit is not None else 1 << 30
            found.append((order, str(node), node))

        return [node for _, _, node in sorted(found, key=lambda item: (item[0], item[1]))]

    def pref_label(
        self,
        node: rdflib.term.Node,
    ) -> str:
        """
        Preferred label of one concept, cached per IRI.
        """
        key: str = str(node)

        if key not in self.labels:
            label: typing.Any = self.rdf_graph.value(node, SKOS.prefLabel)

            if label is None:
                raise FormatError(f"concept {node} has no skos:prefLabel")

            self.labels[key] = str(label)

        return self.labels[key]

    def alt_labels(
        self,
        node: rdflib.term.Node,
    ) -> list[str]:
        """
        Near-synonyms of one concept, sorted.
        """
        return sorted(str(lit) for lit in self.rdf_graph.objects(node, SKOS.altLabel))

    def bank(
        self,
        cls_token: str,
        *,
        source: str = "thesaurus",
    ) -> CandidateBank:
        """
        Candidate bank of all preferred labels.
        """
        phrases: list[str] = [self.pref_label(node) for node in self.concepts()]
        return CandidateBank.build(phrases, cls_token, source=source)

    def vocabulary_entries(
        self,
        *,
        synonym_noise: float = 0.15,
    ) -> list[tuple[str, str]]:
        """
        Vocabulary lines implied by `cf:axis`: the preferred label maps onto
        the axis, each alternative label onto the axis plus a small
        phrase-keyed perturbation.
        """
        entries: list[tuple[str, str]] = []

        for node in self.concepts():
            axis: typing.Any = self.rdf_graph.value(node, CF.axis)

            if axis is None:
                continue

            entries.append((self.pref_label(node), str(int(axis))))

            for alt in self.alt_labels(node):
                entries.append((alt, f"{int(axis)}:1,noise:{synonym_noise}"))

        return entries

    def inject_synonyms(
        self,
        bank: CandidateBank,
        phrase: str,
        *,
        count: int | None = None,
    ) -> CandidateBank:
        """
        Extend a bank with the near-synonyms of one candidate, inserted
        right after it.
        """
        synonyms: list[str] = []

        for node in self.concepts():
            if self.pref_label(node) == phrase:
                synonyms = self.alt_labels(node)
                break

        if count is not None:
            synonyms = synonyms[:count]

        if not synonyms:
            log_msg: str = f"no synonyms found for {phrase!r}"
            self.logger.warning(log_msg)

        phrases: list[str] = []

        for item in bank.attributes:
            phrases.append(item)

            if item == phrase:
                phrases.extend(synonyms)

        return CandidateBank.build(phrases, bank.cls_token, source=f"{bank.source}+synonyms")

    ######################################################################
    # export diagnosis rankings

    def _ranking_frag(
        self,
        run_iri: str,
        scope: str,
        ranking: typing.Sequence[AttributeScore],
    ) -> str:
        rdf_frag: str = ""

        for score in ranking:
            item_iri: str = f"{run_iri}_{scope}_{score.rank}"
            rdf_frag += f"\n{run_iri} {self.n3(CF.ranks)} {item_iri} ."
            rdf_frag += f"\n{item_iri} {self.n3(RDF.type)} {self.n3(CF.RankedAttribute)} ;"
            rdf_frag += f"\n {self.n3(SKOS.prefLabel)} {self.literal(score.phrase, lang='en')} ;"
            rdf_frag += f'\n {self.n3(CF.scope)} "{scope}" ;'
            rdf_frag += f'\n {self.n3(CF.rank)} "{score.rank}"^^{self.n3(XSD.integer)} ;'
            rdf_frag += f'\n {self.n3(CF.ssim)} "{score.s_sim!r}"^^{self.n3(XSD.double)} ;'
            rdf_frag += f'\n {self.n3(CF.suni)} "{score.s_uni!r}"^^{self.n3(XSD.double)} ;'
            rdf_frag += "\n."

        return rdf_frag

    def add_report(
        self,
        report: DiagnosisReport,
        *,
        run_id: str = "run",
    ) -> str:
        """
        Represent a diagnosis report's rankings as RDF, add them to the
        graph, and return the Turtle fragment.
        """
        run_iri: str = f"{self.CF_PREFIX}{run_id}"

        rdf_frag: str = self.RDF_PREAMBLE
        rdf_frag += f"\n{run_iri} {self.n3(RDF.type)} {self.n3(CF.Diagnosis)} ;"
        rdf_frag += f'\n {self.n3(DC.identifier)} "{run_id}" ;'
        rdf_frag += f"\n {self.n3(CF.cls)} {self.literal(str(report.meta.get('cls_token', '')))} ;"
        rdf_frag += "\n."

        rdf_frag += self._ranking_frag(run_iri, "pooled", report.ranking)

        for entry in report.backends:
            scope: str = f"backend{entry['id']}"
            rdf_frag += self._ranking_frag(
                run_iri,
                scope,
                [AttributeScore.from_dict(item) for item in entry["ranking"]],
            )

        self.load_source_text(rdf_frag)
        return rdf_frag

"""Stage orchestration: each stage reads its input artifacts from the run
directory and writes its own, so stages can run one at a time or chained.

A manifest records the config hash, per-stage artifact checksums, stage
statistics, and provider cache counters. Re-running a completed stage with
the same config hash is a no-op unless forced.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .assembler import assemble, export_graph, export_prompt_context, import_graph
from .config import PipelineConfig
from .evaluation import (
    GoldSet,
    build_report,
    entity_metrics,
    render_report_table,
    theme_coherence_metric,
    triple_metrics,
)
from .extractor import ExtractionStats, extract_document
from .mining import FrequencyTable, mine_corpus
from .model import (
    Document,
    EntityOntology,
    MentionCase,
    RelationPhrase,
    Triple,
    TripleSource,
    TypedMention,
)
from .ontology import (
    attach_closest,
    build_entity_ontology,
    export_ontology,
    import_ontology,
)
from .providers import ProviderBundle
from .providers.cache import ProviderCache, record_bundle
from .relations import export_relations, generate_relations, import_relations
from .typer import TypingConfig, mention_context, type_mention

__all__ = ["STAGES", "PipelineError", "Runner", "build_providers"]

log = logging.getLogger(__name__)

STAGES = (
    "ontology",
    "relations",
    "mine",
    "type",
    "extract",
    "assemble",
    "evaluate",
    "export-prompt",
)

ARTIFACTS = {
    "ontology": ("ontology.json",),
    "relations": ("relations.json",),
    "mine": ("mentions.tsv",),
    "type": ("typed.tsv",),
    "extract": ("triples.jsonl",),
    "assemble": ("graph.jsonl",),
    "evaluate": ("report.json",),
    "export-prompt": ("prompt_context.txt",),
}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def build_providers(cfg: PipelineConfig) -> tuple[ProviderBundle, ProviderCache]:
    """Wire the provider bundle for the configured mode, memoized through a
    shared cache that doubles as the run's call log."""
    cache = ProviderCache(cfg.cache_dir)
    if cfg.provider_mode == "mock":
        from .providers.mocks import (
            EmbeddingRetriever,
            HashEmbedding,
            MockWiki,
            OverlapContextTyping,
            RuleTagger,
            ScriptedLlm,
        )

        mock_cfg = cfg.mock_providers
        embedder = HashEmbedding(dim=mock_cfg.embedding_dim)
        wiki = MockWiki.from_file(mock_cfg.wiki_file)
        bundle = ProviderBundle(
            embedding=embedder,
            llm=ScriptedLlm.from_file(mock_cfg.llm_script),
            wiki=wiki,
            tagger=RuleTagger(),
            typing=OverlapContextTyping(),
            retriever=EmbeddingRetriever(
                wiki.universe, embedder, floor=mock_cfg.retriever_floor
            ),
        )
    elif cfg.provider_mode == "http":
        from .providers.http import build_http_bundle

        bundle = build_http_bundle(cfg.http_providers)
    else:
        raise PipelineError("providers", f"unknown provider mode {cfg.provider_mode!r}")
    return record_bundle(bundle, cache), cache


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class Runner:
    cfg: PipelineConfig
    run_dir: Path
    bundle: ProviderBundle
    cache: ProviderCache
    force: bool = False

    def __post_init__(self) -> None:
        self.run_dir = Path(self.run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._manifest = self._load_manifest()

    # ---- manifest -------------------------------------------------------

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / "manifest.json"

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            if manifest.get("config_hash") != self.cfg.config_hash:
                if not self.force:
                    raise PipelineError(
                        "manifest",
                        "run directory was produced with a different config; "
                        "use --force or a fresh --run-dir",
                    )
                manifest = {"config_hash": self.cfg.config_hash, "stages": {}}
            return manifest
        return {"config_hash": self.cfg.config_hash, "stages": {}}

    def _record_stage(self, stage: str, stats: dict) -> None:
        artifacts = {
            name: _sha256(self.run_dir / name) for name in ARTIFACTS[stage]
        }
        self._manifest["stages"][stage] = {
            "artifacts": artifacts,
            "stats": stats,
            "cache": self.cache.stats(),
        }
        self.manifest_path.write_text(
            json.dumps(self._manifest, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    def _is_done(self, stage: str) -> bool:
        if stage not in self._manifest["stages"]:
            return False
        return all((self.run_dir / name).exists() for name in ARTIFACTS[stage])

    def _require(self, stage: str, *needed: str) -> None:
        for dependency in needed:
            missing = [
                name for name in ARTIFACTS[dependency]
                if not (self.run_dir / name).exists()
            ]
            if missing:
                raise PipelineError(
                    stage, f"missing artifacts from stage {dependency!r}: {missing}"
                )

    # ---- inputs ---------------------------------------------------------

    def _load_docs(self) -> list[Document]:
        paths = sorted(Path(self.cfg.docs_dir).glob("*.txt"))
        if not paths:
            raise PipelineError("corpus", f"no .txt documents in {self.cfg.docs_dir}")
        return [
            Document.from_text(path.stem, path.read_text(encoding="utf-8"))
            for path in paths
        ]

    # ---- stages ---------------------------------------------------------

    def run(self, stage: str) -> None:
        if stage == "all":
            for name in STAGES:
                if name == "evaluate" and self.cfg.gold_file is None:
                    log.info("no gold file configured; skipping evaluate")
                    continue
                self.run(name)
            return
        if stage not in STAGES:
            raise PipelineError(stage, "unknown stage")
        if self._is_done(stage) and not self.force:
            log.info("stage %s already complete; skipping (use --force to redo)", stage)
            return
        getattr(self, "_stage_" + stage.replace("-", "_"))()

    def _stage_ontology(self) -> None:
        onto = build_entity_ontology(
            self.cfg.theme,
            self.bundle.wiki,
            self.bundle.embedding,
            max_depth=self.cfg.max_depth,
            edge_threshold=self.cfg.edge_threshold,
        )
        export_ontology(onto, self.run_dir / "ontology.json")
        self._record_stage(
            "ontology", {"categories": len(onto), "edges": len(onto.edges())}
        )

    def _stage_relations(self) -> None:
        self._require("relations", "ontology")
        onto = import_ontology(self.run_dir / "ontology.json")
        ro = import_relations(self.run_dir / "relations.json") if (
            self.run_dir / "relations.json"
        ).exists() else None
        if ro is None:
            from .model import RelationOntology

            ro = RelationOntology()
        names = sorted(onto.category_names())
        for cat1 in names:
            for cat2 in names:
                generate_relations(
                    self.cfg.theme, (cat1, cat2),
                    llm=self.bundle.llm, ro=ro,
                    stop_relations=self.cfg.stop_relations,
                )
        export_relations(ro, self.run_dir / "relations.json")
        phrases = sum(len(ro.phrases(pair)) for pair in ro.pairs())
        self._record_stage("relations", {"pairs": len(ro.pairs()), "phrases": phrases})

    def _stage_mine(self) -> None:
        docs = self._load_docs()
        freq = FrequencyTable.from_tsv(self.cfg.frequency_file)
        mentions = mine_corpus(
            docs, self.bundle.tagger, freq, self.cfg.theme,
            embedder=self.bundle.embedding,
            high_freq_rank=self.cfg.high_frequency_rank,
            coherence_cutoff=self.cfg.coherence_cutoff,
            min_cooccurrence=self.cfg.min_cooccurrence,
            cooccurrence_window=self.cfg.cooccurrence_window,
        )
        lines = ["doc_id\tstart\tend\tsentence\tsurface"]
        total = 0
        for doc in docs:
            for m in mentions[doc.doc_id]:
                total += 1
                lines.append(
                    f"{m.doc_id}\t{m.span[0]}\t{m.span[1]}\t{m.sentence_index}\t{m.text}"
                )
        (self.run_dir / "mentions.tsv").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
        self._record_stage("mine", {"documents": len(docs), "mentions": total})

    def _read_mentions(self) -> dict[str, list[tuple[int, int, int, str]]]:
        rows: dict[str, list[tuple[int, int, int, str]]] = {}
        text = (self.run_dir / "mentions.tsv").read_text(encoding="utf-8")
        for line in text.splitlines()[1:]:
            doc_id, start, end, sentence, surface = line.split("\t")
            rows.setdefault(doc_id, []).append(
                (int(start), int(end), int(sentence), surface)
            )
        return rows

    def _stage_type(self) -> None:
        self._require("type", "ontology", "mine")
        docs = {d.doc_id: d for d in self._load_docs()}
        onto = import_ontology(self.run_dir / "ontology.json")
        mentions = self._read_mentions()
        typing_cfg = TypingConfig(
            theme_threshold=self.cfg.theme_threshold,
            context_threshold=self.cfg.context_threshold,
            retriever_k=self.cfg.retriever_k,
            max_depth=self.cfg.max_depth,
        )
        lines = [
            "doc_id\tstart\tend\tsurface\tentity_name\tcategory\tcase\tc_self\tc_theme"
        ]
        counts = {case.value: 0 for case in MentionCase}
        for doc_id in sorted(mentions):
            doc = docs[doc_id]
            for start, end, sentence, surface in mentions[doc_id]:
                context = mention_context(doc, sentence, self.cfg.context_radius)
                typed = type_mention(
                    surface, doc_id, (start, end), context, onto, self.cfg.theme,
                    wiki=self.bundle.wiki, embedder=self.bundle.embedding,
                    typing_provider=self.bundle.typing,
                    retriever=self.bundle.retriever, config=typing_cfg,
                )
                counts[typed.case.value] += 1
                c_self = "-" if typed.self_coherence is None else f"{typed.self_coherence:.6f}"
                c_theme = "-" if typed.theme_coherence is None else f"{typed.theme_coherence:.6f}"
                lines.append(
                    f"{doc_id}\t{start}\t{end}\t{surface}\t{typed.entity_name}"
                    f"\t{typed.category or '-'}\t{typed.case.value}\t{c_self}\t{c_theme}"
                )
        (self.run_dir / "typed.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
        self._record_stage("type", counts)

    def _read_typed(self) -> dict[str, list[TypedMention]]:
        rows: dict[str, list[TypedMention]] = {}
        text = (self.run_dir / "typed.tsv").read_text(encoding="utf-8")
        for line in text.splitlines()[1:]:
            doc_id, start, end, surface, entity, category, case, c_self, c_theme = (
                line.split("\t")
            )
            rows.setdefault(doc_id, []).append(
                TypedMention(
                    surface=surface, doc_id=doc_id, span=(int(start), int(end)),
                    entity_name=entity,
                    category=None if category == "-" else category,
                    case=MentionCase(case),
                    self_coherence=None if c_self == "-" else float(c_self),
                    theme_coherence=None if c_theme == "-" else float(c_theme),
                )
            )
        return rows

    def _stage_extract(self) -> None:
        self._require("extract", "ontology", "relations", "type")
        docs = {d.doc_id: d for d in self._load_docs()}
        onto = import_ontology(self.run_dir / "ontology.json")
        ro = import_relations(self.run_dir / "relations.json")
        typed = self._read_typed()
        # Categories discovered during typing are re-attached by the same
        # closest-parent rule the typing stage used, in file order.
        for doc_id in sorted(typed):
            for mention in typed[doc_id]:
                if mention.category is not None and mention.category not in onto:
                    attach_closest(
                        onto, mention.category, self.bundle.embedding,
                        max_depth=self.cfg.max_depth,
                    )
        stats = ExtractionStats()
        records: list[dict] = []

        def extract_one(doc_id: str) -> list[Triple]:
            return extract_document(
                docs[doc_id], typed.get(doc_id, []), ro, onto, self.cfg.theme,
                self.bundle.llm,
                sentence_window=self.cfg.sentence_window,
                parent_levels=self.cfg.parent_levels,
                stop_relations=self.cfg.stop_relations,
                reprompt_attempts=self.cfg.reprompt_attempts,
                stats=stats,
            )

        doc_ids = sorted(typed)
        if self.cfg.workers > 1:
            # Parallel pairs inherit enrichment timing from other documents,
            # so only workers=1 guarantees byte-stable candidate prompts.
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(extract_one, doc_ids))
        else:
            results = [extract_one(doc_id) for doc_id in doc_ids]
        for triples in results:
            for t in triples:
                records.append(
                    {
                        "head": t.head,
                        "relation": t.relation.text,
                        "tail": t.tail,
                        "head_category": t.head_category,
                        "tail_category": t.tail_category,
                        "doc_id": t.provenance[0][0],
                        "context": list(t.provenance[0][1]),
                        "source": t.source.value,
                    }
                )
        (self.run_dir / "triples.jsonl").write_text(
            "".join(json.dumps(r) + "\n" for r in records), encoding="utf-8"
        )
        self._record_stage("extract", stats.as_dict())

    def _stage_assemble(self) -> None:
        self._require("assemble", "extract", "ontology")
        onto = import_ontology(self.run_dir / "ontology.json")
        triples: list[Triple] = []
        for line in (self.run_dir / "triples.jsonl").read_text("utf-8").splitlines():
            r = json.loads(line)
            triples.append(
                Triple(
                    head=r["head"], relation=RelationPhrase(r["relation"]),
                    tail=r["tail"], head_category=r["head_category"],
                    tail_category=r["tail_category"],
                    provenance=((r["doc_id"], tuple(r["context"])),),
                    source=TripleSource(r["source"]),
                )
            )
        graph = assemble(
            triples,
            embedder=self.bundle.embedding,
            ontology=onto,
            threshold=self.cfg.coreference_threshold,
        )
        export_graph(graph, self.run_dir / "graph.jsonl")
        self._record_stage(
            "assemble",
            {
                "input_triples": len(triples),
                "triples": len(graph),
                "entities": len(graph.entities()),
                "aliases": len(graph.alias_map),
            },
        )

    def _stage_evaluate(self) -> None:
        self._require("evaluate", "assemble")
        if self.cfg.gold_file is None:
            raise PipelineError("evaluate", "no gold_file configured")
        graph = import_graph(self.run_dir / "graph.jsonl")
        gold = GoldSet.from_file(self.cfg.gold_file)
        allowlist: frozenset[str] = frozenset()
        if self.cfg.allowlist_file is not None:
            allowlist = frozenset(
                line.strip()
                for line in Path(self.cfg.allowlist_file).read_text("utf-8").splitlines()
                if line.strip()
            )
        pred_entities = sorted(graph.entities())
        pred_triples = [(t.head, t.relation.text, t.tail) for t in graph.triples()]
        entity = entity_metrics(
            pred_entities, gold,
            embedder=self.bundle.embedding,
            threshold=self.cfg.entity_threshold, allowlist=allowlist,
        )
        triple = triple_metrics(
            pred_triples, list(gold.triples),
            embedder=self.bundle.embedding, threshold=self.cfg.triple_threshold,
        )
        coherence = theme_coherence_metric(
            pred_triples, self.cfg.theme,
            embedder=self.bundle.embedding, threshold=self.cfg.coherence_threshold,
        )
        report = build_report(
            entity, triple, coherence,
            thresholds={
                "entity": self.cfg.entity_threshold,
                "triple": self.cfg.triple_threshold,
                "coherence": self.cfg.coherence_threshold,
            },
        )
        (self.run_dir / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(render_report_table(report))
        self._record_stage("evaluate", {"gold_entities": len(gold.entity_groups),
                                        "gold_triples": len(gold.triples)})

    def _stage_export_prompt(self) -> None:
        self._require("export-prompt", "assemble")
        graph = import_graph(self.run_dir / "graph.jsonl")
        text = export_prompt_context(
            graph, self.cfg.theme, self.bundle.embedding, self.cfg.prompt_budget
        )
        (self.run_dir / "prompt_context.txt").write_text(
            text + ("\n" if text else ""), encoding="utf-8"
        )
        self._record_stage(
            "export-prompt",
            {"lines": text.count("\n") + 1 if text else 0, "characters": len(text)},
        )

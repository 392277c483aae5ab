import logging
from typing import Any, Dict, Optional, TypedDict

from langgraph.graph import END, StateGraph

from src.agents.retrieval import RetrievalAgent
from src.errors import MissingAnswerTags
from src.models import Query, TableCorpus
from src.tools.eval_tools import AnswerRecord, exact_match, token_f1
from src.tools.fine_retrieval_tools import RetrievalResult
from src.tools.generation_tools import Generator
from src.tools.prompt_tools import ParsedResponse, PromptBundle, build_prompt, parse_response

logger = logging.getLogger("qa_graph")


class QAState(TypedDict, total=False):
    query: Query
    timings: Dict[str, float]
    result: RetrievalResult
    prompt: PromptBundle
    response: str
    parsed: Optional[ParsedResponse]
    parse_failure: bool
    record: AnswerRecord


class QAWorkflow:
    """retrieve -> build_prompt -> generate -> parse -> score, compiled once and invoked per query."""

    def __init__(
        self,
        retriever: RetrievalAgent,
        corpus: TableCorpus,
        generator: Generator,
        graph_info: bool = True,
        long_cot: bool = True,
    ):
        self.retriever = retriever
        self.corpus = corpus
        self.generator = generator
        self.graph_info = graph_info
        self.long_cot = long_cot
        self.compiled = self.create_graph().compile()

    def node_retrieve(self, state: QAState) -> Dict[str, Any]:
        _, result, timings = self.retriever.retrieve(state["query"], stage="full")
        return {"result": result, "timings": timings}

    def node_build_prompt(self, state: QAState) -> Dict[str, Any]:
        bundle = build_prompt(
            state["query"],
            state["result"],
            self.corpus,
            graph_info=self.graph_info,
            long_cot=self.long_cot,
        )
        return {"prompt": bundle}

    def node_generate(self, state: QAState) -> Dict[str, Any]:
        return {"response": self.generator(state["prompt"])}

    def node_parse(self, state: QAState) -> Dict[str, Any]:
        try:
            return {"parsed": parse_response(state["response"]), "parse_failure": False}
        except MissingAnswerTags as e:
            logger.warning(f"Query {state['query'].id}: {e}")
            return {"parsed": None, "parse_failure": True}

    def node_score(self, state: QAState) -> Dict[str, Any]:
        query, parsed = state["query"], state.get("parsed")
        prediction = parsed.answer if parsed else None
        scorable = parsed is not None and not parsed.is_na
        record = AnswerRecord(
            query_id=query.id,
            task_type=query.task_type.value,
            prediction=prediction,
            gold=query.gold_answer,
            em=exact_match(prediction, query.gold_answer) if scorable else 0,
            f1=token_f1(prediction, query.gold_answer) if scorable else 0.0,
            is_na=bool(parsed and parsed.is_na),
            parse_failure=state.get("parse_failure", False),
        )
        return {"record": record}

    def create_graph(self) -> StateGraph:
        graph = StateGraph(QAState)
        graph.add_node("retrieve", self.node_retrieve)
        graph.add_node("build_prompt", self.node_build_prompt)
        graph.add_node("generate", self.node_generate)
        graph.add_node("parse", self.node_parse)
        graph.add_node("score", self.node_score)
        graph.add_edge("retrieve", "build_prompt")
        graph.add_edge("build_prompt", "generate")
        graph.add_edge("generate", "parse")
        graph.add_edge("parse", "score")
        graph.add_edge("score", END)
        graph.set_entry_point("retrieve")
        return graph

    def run(self, query: Query) -> QAState:
        return self.compiled.invoke({"query": query})

#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "polca/trace.hpp"

using namespace polca;

namespace {

// A hand-built trace shaped like one bootstrap round plus one full iteration.
TraceLog sample_trace() {
    TraceLog log;
    log.set_header(Json{{"run_id", "run-1"}});
    log.append(1, TraceKind::iteration_start, Json{{"memory_size", 1}});
    for (int i = 0; i < 2; ++i)
        log.append(1, TraceKind::evaluation,
                   Json{{"candidate_id", "theta-0"}, {"task_id", "t0"}, {"reward", 0.25 * (i + 1)},
                        {"phase", "explore"}});
    log.append(1, TraceKind::memory_update, Json{{"phase", "explore"}, {"best_mean", 0.375}});
    log.append(1, TraceKind::summary, Json{{"digest_chars", 10}});
    log.append(1, TraceKind::proposal, Json{{"parent_id", "theta-0"}, {"candidate_id", "theta-1"}});
    log.append(1, TraceKind::filter_decision,
               Json{{"candidate_id", "theta-1"}, {"accepted", true}, {"min_distance", 0.9}});
    for (int i = 0; i < 2; ++i)
        log.append(1, TraceKind::evaluation,
                   Json{{"candidate_id", "theta-1"}, {"task_id", "t0"}, {"reward", 0.8},
                        {"phase", "new"}});
    log.append(1, TraceKind::memory_update, Json{{"phase", "new"}, {"best_mean", 0.8}});
    MetricCounters counters;
    counters.metric_calls = 4;
    counters.evaluation_steps = 2;
    counters.proposals = 1;
    counters.proposal_steps = 1;
    log.append(1, TraceKind::run_end, Json{{"counters", counters_to_json(counters)}});
    return log;
}

}  // namespace

TEST_CASE("emit_trace writes a header line plus one line per event") {
    TraceLog log;
    log.set_header(Json{{"run_id", "r"}});
    log.append(1, TraceKind::iteration_start, Json::object());
    log.append(1, TraceKind::summary, Json{{"digest_chars", 3}});
    log.append(1, TraceKind::run_end, Json{{"counters", counters_to_json({})}});

    std::ostringstream out;
    emit_trace(log, out);
    const std::string text = out.str();
    REQUIRE(std::count(text.begin(), text.end(), '\n') == 4);
    REQUIRE(text.back() == '\n');

    const std::string first_line = text.substr(0, text.find('\n'));
    const Json header = Json::parse(first_line);
    REQUIRE(header.at("schema_version").get<int>() == kTraceSchemaVersion);
    REQUIRE(header.at("kind") == "header");
}

TEST_CASE("trace round-trips through JSONL") {
    TraceLog log = sample_trace();
    std::ostringstream out;
    emit_trace(log, out);
    std::istringstream in(out.str());
    TraceLog parsed = parse_trace(in);

    REQUIRE(parsed.size() == log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        REQUIRE(parsed.events()[i].seq == log.events()[i].seq);
        REQUIRE(parsed.events()[i].iteration == log.events()[i].iteration);
        REQUIRE(parsed.events()[i].kind == log.events()[i].kind);
        REQUIRE(parsed.events()[i].payload == log.events()[i].payload);
    }

    // Re-emission is byte-identical.
    std::ostringstream again;
    emit_trace(parsed, again);
    REQUIRE(again.str() == out.str());
}

TEST_CASE("tagged doubles cover the non-finite cases") {
    REQUIRE(finite_or_tag(1.5) == Json(1.5));
    REQUIRE(double_from_tagged(finite_or_tag(std::numeric_limits<double>::infinity())) ==
            std::numeric_limits<double>::infinity());
    REQUIRE(std::isnan(double_from_tagged(finite_or_tag(std::nan("")))));
}

TEST_CASE("reconstruct_counters matches the recorded snapshot") {
    TraceLog log = sample_trace();
    const MetricCounters reconstructed = reconstruct_counters(log);
    const MetricCounters recorded =
        counters_from_json(log.events().back().payload.at("counters"));
    REQUIRE(reconstructed == recorded);
}

TEST_CASE("metrics_curves expands rounds into the four axes") {
    TraceLog log = sample_trace();
    auto rows = metrics_curves(log);

    std::vector<MetricsRow> metric_calls, eval_steps, proposal_steps, proposals;
    for (const auto& r : rows) switch (r.step_kind) {
            case StepKind::metric_call: metric_calls.push_back(r); break;
            case StepKind::evaluation_step: eval_steps.push_back(r); break;
            case StepKind::proposal_step: proposal_steps.push_back(r); break;
            case StepKind::proposal: proposals.push_back(r); break;
        }

    REQUIRE(metric_calls.size() == 4);
    REQUIRE(eval_steps.size() == 2);
    REQUIRE(proposal_steps.size() == 1);
    REQUIRE(proposals.size() == 1);

    // Calls within one round share the round's best score.
    REQUIRE(metric_calls[0].best_score == metric_calls[1].best_score);
    REQUIRE(metric_calls[0].best_score == Catch::Approx(0.375));
    REQUIRE(metric_calls[2].best_score == Catch::Approx(0.8));

    // Monotone along every axis for this improving run, and all four axes
    // end at the same final best.
    for (auto* axis : {&metric_calls, &eval_steps, &proposal_steps, &proposals}) {
        for (std::size_t i = 1; i < axis->size(); ++i)
            REQUIRE((*axis)[i].best_score >= (*axis)[i - 1].best_score);
        REQUIRE(axis->back().best_score == Catch::Approx(0.8));
    }

    // Step indices are 1-based and contiguous.
    for (std::size_t i = 0; i < metric_calls.size(); ++i)
        REQUIRE(metric_calls[i].step_index == i + 1);
}

TEST_CASE("metrics_curves rejects truncated traces") {
    TraceLog log;
    log.set_header(Json{{"run_id", "r"}});
    log.append(1, TraceKind::iteration_start, Json::object());
    REQUIRE_THROWS_AS(metrics_curves(log), ParseError);

    TraceLog empty;
    REQUIRE_THROWS_AS(metrics_curves(empty), ParseError);
}

TEST_CASE("parse_trace rejects malformed input") {
    std::istringstream empty("");
    REQUIRE_THROWS_AS(parse_trace(empty), ParseError);

    std::istringstream no_header("{\"seq\":1}\n");
    REQUIRE_THROWS_AS(parse_trace(no_header), ParseError);

    TraceLog log = sample_trace();
    std::ostringstream out;
    emit_trace(log, out);
    std::string text = out.str();
    // Drop one middle line to force a seq gap.
    const auto first = text.find('\n', text.find('\n') + 1);
    const auto second = text.find('\n', first + 1);
    text.erase(first + 1, second - first);
    std::istringstream gap(text);
    REQUIRE_THROWS_WITH(parse_trace(gap), Catch::Matchers::ContainsSubstring("seq gap"));
}

TEST_CASE("emit_trace surfaces sink write failures") {
    TraceLog log = sample_trace();
    std::ostringstream out;
    out.setstate(std::ios::failbit);
    REQUIRE_THROWS_WITH(emit_trace(log, out),
                        Catch::Matchers::ContainsSubstring("write failure"));
    REQUIRE_THROWS_AS(emit_trace_file(log, "/nonexistent-dir/trace.jsonl"), Error);
}

TEST_CASE("csv output has the documented fixed columns") {
    TraceLog log = sample_trace();
    std::ostringstream out;
    write_metrics_csv(metrics_curves(log), out);
    const std::string text = out.str();
    REQUIRE(text.rfind("step_kind,step_index,best_score\n", 0) == 0);
    REQUIRE(text.find("metric_call,1,") != std::string::npos);
    REQUIRE(text.find("evaluation_step,2,") != std::string::npos);
}

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "polca/core.hpp"
#include "polca/error.hpp"

namespace polca {

inline constexpr int kTraceSchemaVersion = 1;

// The four budget axes: one parallelized evaluation round, one guide call,
// one parallelized proposal round, one optimizer call.
struct MetricCounters {
    std::uint64_t metric_calls = 0;
    std::uint64_t evaluation_steps = 0;
    std::uint64_t proposals = 0;
    std::uint64_t proposal_steps = 0;

    bool operator==(const MetricCounters& o) const {
        return metric_calls == o.metric_calls && evaluation_steps == o.evaluation_steps &&
               proposals == o.proposals && proposal_steps == o.proposal_steps;
    }
};

inline Json counters_to_json(const MetricCounters& c) {
    return Json{{"metric_calls", c.metric_calls},
                {"evaluation_steps", c.evaluation_steps},
                {"proposals", c.proposals},
                {"proposal_steps", c.proposal_steps}};
}

inline MetricCounters counters_from_json(const Json& j) {
    MetricCounters c;
    c.metric_calls = j.at("metric_calls").get<std::uint64_t>();
    c.evaluation_steps = j.at("evaluation_steps").get<std::uint64_t>();
    c.proposals = j.at("proposals").get<std::uint64_t>();
    c.proposal_steps = j.at("proposal_steps").get<std::uint64_t>();
    return c;
}

enum class TraceKind {
    iteration_start,
    evaluation,
    proposal,
    filter_decision,
    memory_update,
    summary,
    run_end,
};

inline const char* to_string(TraceKind k) {
    switch (k) {
        case TraceKind::iteration_start: return "iteration_start";
        case TraceKind::evaluation: return "evaluation";
        case TraceKind::proposal: return "proposal";
        case TraceKind::filter_decision: return "filter_decision";
        case TraceKind::memory_update: return "memory_update";
        case TraceKind::summary: return "summary";
        case TraceKind::run_end: return "run_end";
    }
    return "?";
}

inline TraceKind trace_kind_from_string(const std::string& s) {
    if (s == "iteration_start") return TraceKind::iteration_start;
    if (s == "evaluation") return TraceKind::evaluation;
    if (s == "proposal") return TraceKind::proposal;
    if (s == "filter_decision") return TraceKind::filter_decision;
    if (s == "memory_update") return TraceKind::memory_update;
    if (s == "summary") return TraceKind::summary;
    if (s == "run_end") return TraceKind::run_end;
    throw ParseError("unknown trace event kind '" + s + "'");
}

struct TraceEvent {
    std::uint64_t seq = 0;
    std::int64_t iteration = 0;
    TraceKind kind = TraceKind::iteration_start;
    Json payload;  // kind-specific record
};

// Append-only in-memory event log; the engine is the single producer.
class TraceLog {
public:
    void set_header(Json header) { header_ = std::move(header); }
    const Json& header() const { return header_; }

    void append(std::int64_t iteration, TraceKind kind, Json payload) {
        events_.push_back(TraceEvent{next_seq_++, iteration, kind, std::move(payload)});
    }

    const std::vector<TraceEvent>& events() const { return events_; }
    std::size_t size() const { return events_.size(); }

private:
    Json header_ = Json::object();
    std::vector<TraceEvent> events_;
    std::uint64_t next_seq_ = 1;
};

// Non-finite doubles have no JSON literal; encode them as tagged strings.
inline Json finite_or_tag(double v) {
    if (std::isfinite(v)) return Json(v);
    if (std::isnan(v)) return Json("nan");
    return Json(v > 0 ? "inf" : "-inf");
}

inline double double_from_tagged(const Json& j) {
    if (j.is_number()) return j.get<double>();
    const std::string s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    throw ParseError("not a tagged double: '" + s + "'");
}

// Serializes header plus events as JSONL: one compact JSON object per line,
// newline-terminated, header first.
inline void emit_trace(const TraceLog& log, std::ostream& sink) {
    Json header = log.header();
    header["schema_version"] = kTraceSchemaVersion;
    header["kind"] = "header";
    sink << header.dump() << "\n";
    if (!sink) throw Error("emit_trace: sink write failure on header");
    for (const auto& e : log.events()) {
        Json j{{"seq", e.seq},
               {"iteration", e.iteration},
               {"kind", to_string(e.kind)},
               {"payload", e.payload}};
        sink << j.dump() << "\n";
        if (!sink) throw Error("emit_trace: sink write failure at seq " + std::to_string(e.seq));
    }
    sink.flush();
}

inline void emit_trace_file(const TraceLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("emit_trace: cannot open '" + path + "'");
    emit_trace(log, out);
}

inline TraceLog parse_trace(std::istream& in) {
    TraceLog log;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("parse_trace: empty input");
    Json header = Json::parse(line);
    if (header.value("kind", "") != "header")
        throw ParseError("parse_trace: first line is not a header");
    if (header.at("schema_version").get<int>() != kTraceSchemaVersion)
        throw ParseError("parse_trace: unsupported schema version");
    log.set_header(header);
    std::uint64_t expected_seq = 1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Json j = Json::parse(line);
        TraceEvent e;
        e.seq = j.at("seq").get<std::uint64_t>();
        if (e.seq != expected_seq++)
            throw ParseError("parse_trace: seq gap at " + std::to_string(e.seq));
        e.iteration = j.at("iteration").get<std::int64_t>();
        e.kind = trace_kind_from_string(j.at("kind").get<std::string>());
        e.payload = j.at("payload");
        log.append(e.iteration, e.kind, e.payload);
    }
    return log;
}

inline TraceLog parse_trace_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("parse_trace: cannot open '" + path + "'");
    return parse_trace(in);
}

// Rebuilds the budget counters from the raw event stream: every guide call
// emits one evaluation event, every evaluate round one memory_update, every
// optimizer success one proposal event and every propose round one summary.
inline MetricCounters reconstruct_counters(const TraceLog& log) {
    MetricCounters c;
    for (const auto& e : log.events()) {
        switch (e.kind) {
            case TraceKind::evaluation: c.metric_calls += 1; break;
            case TraceKind::memory_update: c.evaluation_steps += 1; break;
            case TraceKind::proposal:
                // Failed optimizer contexts are logged with a null candidate
                // id and do not count as proposals.
                if (!e.payload.at("candidate_id").is_null()) c.proposals += 1;
                break;
            case TraceKind::summary: c.proposal_steps += 1; break;
            default: break;
        }
    }
    return c;
}

enum class StepKind { evaluation_step, metric_call, proposal_step, proposal };

inline const char* to_string(StepKind k) {
    switch (k) {
        case StepKind::evaluation_step: return "evaluation_step";
        case StepKind::metric_call: return "metric_call";
        case StepKind::proposal_step: return "proposal_step";
        case StepKind::proposal: return "proposal";
    }
    return "?";
}

struct MetricsRow {
    StepKind step_kind;
    std::uint64_t step_index = 0;
    double best_score = 0.0;
};

// Best-score-so-far curves against all four budget axes, replayed from the
// trace. Stats update at evaluation-round granularity (the calls inside one
// round are parallel and share the round's post-update best score).
inline std::vector<MetricsRow> metrics_curves(const TraceLog& log) {
    if (log.events().empty() || log.events().back().kind != TraceKind::run_end)
        throw ParseError("metrics_curves: trace is truncated (no run_end)");

    struct Stat {
        double sum = 0.0;
        std::uint64_t count = 0;
    };
    std::unordered_map<std::string, Stat> stats;
    bool any_sampled = false;
    double best = -std::numeric_limits<double>::infinity();
    std::vector<MetricsRow> rows;
    std::uint64_t metric_call_idx = 0, eval_step_idx = 0, proposal_idx = 0, proposal_step_idx = 0;
    std::uint64_t pending_calls = 0;

    auto refresh_best = [&] {
        best = -std::numeric_limits<double>::infinity();
        for (const auto& [id, s] : stats)
            if (s.count > 0) best = std::max(best, s.sum / static_cast<double>(s.count));
    };

    for (const auto& e : log.events()) {
        switch (e.kind) {
            case TraceKind::evaluation: {
                Stat& s = stats[e.payload.at("candidate_id").get<std::string>()];
                s.sum += e.payload.at("reward").get<double>();
                s.count += 1;
                any_sampled = true;
                pending_calls += 1;
                break;
            }
            case TraceKind::memory_update: {
                refresh_best();
                if (!any_sampled)
                    throw ParseError("metrics_curves: evaluation round closed before any sample");
                for (std::uint64_t i = 0; i < pending_calls; ++i)
                    rows.push_back(MetricsRow{StepKind::metric_call, ++metric_call_idx, best});
                pending_calls = 0;
                rows.push_back(MetricsRow{StepKind::evaluation_step, ++eval_step_idx, best});
                break;
            }
            case TraceKind::summary:
                rows.push_back(MetricsRow{StepKind::proposal_step, ++proposal_step_idx, best});
                break;
            case TraceKind::proposal:
                if (!e.payload.at("candidate_id").is_null())
                    rows.push_back(MetricsRow{StepKind::proposal, ++proposal_idx, best});
                break;
            default: break;
        }
    }
    if (rows.empty()) throw ParseError("metrics_curves: trace contains no evaluation rounds");

    // Every curve ends at the run's final best: the last sample of an axis
    // whose counter stopped advancing early still reflects everything the
    // run attained afterwards.
    refresh_best();
    std::map<StepKind, MetricsRow*> last;
    for (auto& r : rows) last[r.step_kind] = &r;
    for (auto& [kind, row] : last) row->best_score = best;
    return rows;
}

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, std::ostream& out) {
    out << "step_kind,step_index,best_score\n";
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.17g", r.best_score);
        out << to_string(r.step_kind) << "," << r.step_index << "," << buf << "\n";
    }
}

}  // namespace polca

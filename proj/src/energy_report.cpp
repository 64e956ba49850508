#include "spikegrid/csv.hpp"
#include "spikegrid/energy.hpp"
#include "spikegrid/runner.hpp"

#include <json.hpp>

#include <fstream>
#include <ostream>
#include <string>

namespace spikegrid {

/// Reads a run directory's energy.csv, checks it against metrics.json,
/// writes report.csv and returns the per-kind comparison.
ComparativeReport energy_report(const std::string& run_dir, std::ostream& out) {
    CsvTable en = read_csv(run_dir + "/energy.csv");
    std::ifstream mf(run_dir + "/metrics.json");
    if (!mf) throw ConfigError("missing metrics.json in " + run_dir);
    nlohmann::json metrics = nlohmann::json::parse(mf);

    const auto expected_ticks = metrics.at("control_ticks").get<std::uint64_t>();
    if (en.rows.size() != expected_ticks)
        throw ConfigError("energy.csv row count " + std::to_string(en.rows.size()) +
                          " does not match the recorded tick count " +
                          std::to_string(expected_ticks));

    EnergyLedger ledger;
    auto col_u64 = [&](std::size_t row, const char* name) {
        return static_cast<std::uint64_t>(
            std::stoull(en.rows[row][static_cast<std::size_t>(en.column_index(name))]));
    };
    for (std::size_t r = 0; r < en.rows.size(); ++r) {
        ledger.snn += {col_u64(r, "snn_acc"), col_u64(r, "snn_mac")};
        ledger.rnn += {col_u64(r, "rnn_acc"), col_u64(r, "rnn_mac")};
        ledger.ann += {col_u64(r, "ann_acc"), col_u64(r, "ann_mac")};
    }
    for (auto [kind, key] : {std::pair{&ledger.snn, "snn"}, {&ledger.rnn, "rnn"},
                             {&ledger.ann, "ann"}}) {
        const auto& rec = metrics.at("energy").at(key);
        if (rec.at("acc").get<std::uint64_t>() != kind->acc ||
            rec.at("mac").get<std::uint64_t>() != kind->mac)
            throw ConfigError("energy.csv totals disagree with metrics.json");
    }

    ComparativeReport report = comparative_report(ledger);
    CsvWriter rc(run_dir + "/report.csv");
    rc.header({"kind", "acc", "mac", "joules"});
    for (EstimatorKind k : {EstimatorKind::Snn, EstimatorKind::Rnn, EstimatorKind::Ann}) {
        const OpCounts& c = ledger.of(k);
        rc.field(std::string(estimator_name(k)));
        rc.field(c.acc);
        rc.field(c.mac);
        rc.field(report.joules(k));
        rc.end_row();
    }

    out << "computational energy over " << en.rows.size() << " control ticks\n";
    for (EstimatorKind k : {EstimatorKind::Snn, EstimatorKind::Rnn, EstimatorKind::Ann}) {
        const OpCounts& c = ledger.of(k);
        out << "  " << estimator_name(k) << ": acc=" << c.acc << " mac=" << c.mac
            << " ops=" << report.ops(k) << " energy=" << report.joules(k) << " J\n";
    }
    out << "  ordering E_snn <= E_rnn < E_ann: "
        << (report.ordering_holds() ? "holds" : "violated")
        << " (ann/snn ratio " << report.ann_to_snn_ratio() << ")\n";
    return report;
}

}  // namespace spikegrid

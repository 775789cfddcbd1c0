#pragma once

// Scenario configuration: sectioned key=value text checked against a fixed
// schema. Every physical key carries its unit in the name.

#include <afcsim/csv.hpp>
#include <afcsim/errors.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace afcsim::config {

enum class Kind { number, integer, boolean, text, number_list };

struct KeySpec
{
    std::string key;
    Kind kind = Kind::number;
    std::string default_value;
    std::string doc;
    /// Allowed values for text keys; empty means free text.
    std::vector<std::string> choices = {};
};

struct SectionSpec
{
    std::string name;
    /// `sequence` sections are written [sequence.N] with integer N.
    bool indexed = false;
    std::vector<KeySpec> keys;
};

inline const std::vector<std::string>& scenario_names()
{
    static const std::vector<std::string> names{"fig2-echo-decay", "fig3-nutation",    "fig4-afc-prep",
                                                "fig5a-afc-sweep", "fig5b-spinwave",   "fig5c-spin-decay",
                                                "enhancement-report", "bloch-sequence"};
    return names;
}

inline const std::vector<SectionSpec>& schema()
{
    using K = Kind;
    static const std::vector<SectionSpec> s{
        {"",
         false,
         {
             {"scenario", K::text, "", "built-in scenario to run", scenario_names()},
             {"title", K::text, "", "free-text label copied into the report"},
         }},
        {"scheme",
         false,
         {
             {"ground_splittings_mhz", K::number_list, "10.2, 17.3", "1/2g-3/2g and 3/2g-5/2g gaps"},
             {"excited_splittings_mhz", K::number_list, "4.6, 4.8", "1/2e-3/2e and 3/2e-5/2e gaps"},
             {"inhom_fwhm_ghz", K::number, "20", "optical inhomogeneous width"},
             {"t2_opt_us", K::number, "49.9", "optical coherence time"},
             {"t1_opt_us", K::number, "164", "excited-state lifetime"},
             {"gamma_inh_spin_khz", K::number, "23.6", "spin inhomogeneous FWHM"},
             {"role_afc", K::integer, "0", "ground state holding the comb"},
             {"role_storage", K::integer, "1", "ground state receiving the spin wave"},
             {"role_auxiliary", K::integer, "2", "ground state used for burn-back"},
         }},
        {"ensemble",
         false,
         {
             {"grid_half_span_mhz", K::number, "25", "detuning grid half span"},
             {"grid_step_mhz", K::number, "0.01", "detuning grid step"},
             {"slabs", K::integer, "10", "thin slabs along the crystal"},
             {"annuli", K::integer, "1", "equal-power beam annuli (1 = plane wave)"},
             {"spin_points", K::integer, "21", "spin detuning grid points"},
             {"bin_floor", K::number, "0.001", "drop bins below this fraction of the peak OD"},
             {"line_fwhm_mhz", K::number, "6", "width of the absorbing line (echo, nutation, sequence)"},
             {"line_shape", K::text, "flat", "absorbing line shape", {"flat", "gaussian"}},
             {"line_od", K::number, "0.1", "peak OD of the absorbing line"},
             {"beat_fraction", K::number, "1", "relative OD of the second class (nutation beat)"},
             {"beat_fwhm_mhz", K::number, "0.5", "width of the second class line"},
         }},
        {"preparation",
         false,
         {
             {"mode", K::text, "synthetic", "comb source", {"synthetic", "pumped"}},
             {"delta_khz", K::number_list, "400", "comb spacings"},
             {"tooth_od", K::number, "2.43", "synthetic tooth peak OD above background"},
             {"tooth_fwhm_khz", K::number, "195", "synthetic tooth FWHM"},
             {"background_od", K::number, "1", "OD_B inside the transparency window"},
             {"comb_bandwidth_mhz", K::number, "8", "comb bandwidth"},
             {"reference_od", K::number, "1", "flat OD of the reference (no comb) run"},
             {"finesse", K::number, "3", "pumped comb finesse"},
             {"feature_od", K::number, "2.35", "target burn-back feature OD"},
             {"feature_width_mhz", K::number, "2.5", "single-class feature width"},
             {"pit_width_mhz", K::number, "18", "transparency window width"},
             {"pit_segment_ms", K::number, "5", "duration of one pit sweep"},
             {"pit_max_segments", K::integer, "60", "pit sweep budget"},
             {"gap_ms_per_mhz", K::number, "0.5", "comb carving time per MHz of gap"},
             {"od_calibration", K::number, "18", "OD of the unpumped ensemble"},
             {"pump_rate_per_s", K::number, "1e5", "pump excitation rate"},
             {"pump_linewidth_khz", K::number, "50", "pump laser linewidth"},
         }},
        {"sequence",
         true,
         {
             {"role", K::text, "input", "pulse role", {"input", "refocus", "control", "probe"}},
             {"shape", K::text, "gaussian", "envelope", {"gaussian", "square", "chirped-gaussian"}},
             {"fwhm_ns", K::number, "345", "intensity FWHM, or duration of a square pulse"},
             {"peak_rabi_mhz", K::number, "0.001", "peak Rabi frequency / 2 pi"},
             {"power_mw", K::number, "0", "if > 0, peak Rabi from power via the calibration"},
             {"carrier_mhz", K::number, "0", "carrier detuning"},
             {"chirp_mhz", K::number, "0", "chirp span (chirped-gaussian)"},
             {"center_us", K::number, "0", "pulse centre time"},
             {"truncation", K::number, "2", "support in units of FWHM each side"},
         }},
        {"engine",
         false,
         {
             {"dt_ns", K::number, "2", "Bloch integration step"},
             {"chunks", K::integer, "64", "work partitions for the ordered reduction"},
             {"midpoint", K::boolean, "true", "two-stage slab update"},
             {"t_start_us", K::number, "0", "simulation window start (auto if end <= start)"},
             {"t_end_us", K::number, "0", "simulation window end"},
             {"tail_us", K::number, "3", "automatic window margin after the last pulse"},
             {"pre_pad_us", K::number, "1", "linear engine: time before the pulse"},
             {"window_us", K::number, "12.5", "linear engine: time after the pulse"},
             {"pulse_dt_ns", K::number, "1", "linear engine: pulse sample period"},
         }},
        {"analysis",
         false,
         {
             {"tau_us", K::number_list, "5, 10, 15, 20", "two-pulse delays"},
             {"pi_duration_us", K::number, "0.5", "square refocusing pulse duration"},
             {"rabi_mhz", K::number, "1.6", "nutation drive Rabi frequency / 2 pi"},
             {"nutation_duration_us", K::number, "2", "nutation drive duration"},
             {"include_beat", K::boolean, "true", "populate the second class"},
             {"notch_mhz", K::number, "10.2", "beat removed before the t_pi search (0 disables)"},
             {"beat_min_mhz", K::number, "5", "lower bound of the beat search"},
             {"storage_us", K::number_list, "3.6", "spin storage times T_s"},
             {"control_center_us", K::number, "1.25", "centre of the first control pulse"},
             {"echo_guard", K::number, "1.5", "guard half-width around pulses and echoes, in FWHM"},
             {"spin_tail_us", K::number, "1", "recorded time after the spin-wave echo window"},
             {"isd_beta", K::number, "0", "instantaneous spectral diffusion coefficient"},
             {"isd_excitation", K::number_list, "0", "excitation values P_p*OD/t_p for the ISD trend"},
             {"eta_transfer", K::number, "0.5", "control-pulse transfer efficiency"},
             {"waveguide_transmission", K::number, "0.5", "facet-to-facet transmission"},
             {"eta_afc_device", K::number, "0.146", "internal AFC efficiency for the device figure"},
             {"eta_afc_spinwave", K::number, "0.083", "internal AFC efficiency for the composition"},
             {"waist_um", K::number, "14", "bulk beam e^-2 waist radius"},
             {"wavelength_nm", K::number, "606", "vacuum wavelength"},
             {"refractive_index", K::number, "1.8", "crystal index"},
             {"length_mm", K::number, "10", "crystal length"},
             {"focus_mm", K::number, "0", "focus position from the input facet"},
             {"mode_wx_um", K::number, "9.25", "waveguide mode e^-2 radius x"},
             {"mode_wy_um", K::number, "7.9", "waveguide mode e^-2 radius y"},
             {"rabi_wg_mhz", K::number, "1.6", "measured waveguide Rabi / 2 pi"},
             {"power_wg_mw", K::number, "2", "power of the waveguide measurement"},
             {"rabi_bulk_mhz", K::number, "0.69", "measured bulk Rabi / 2 pi"},
             {"power_bulk_mw", K::number, "15", "power of the bulk measurement"},
             {"calibration_power_mw", K::number, "2", "power_to_rabi reference power"},
             {"calibration_rabi_mhz", K::number, "1.6", "power_to_rabi reference Rabi / 2 pi"},
         }},
    };
    return s;
}

inline const SectionSpec* find_section_spec(const std::string& name)
{
    for (const auto& s : schema()) {
        if (s.name == name) {
            return &s;
        }
    }
    return nullptr;
}

inline const KeySpec* find_key_spec(const SectionSpec& sec, const std::string& key)
{
    for (const auto& k : sec.keys) {
        if (k.key == key) {
            return &k;
        }
    }
    return nullptr;
}

namespace detail {

inline std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string(s.substr(b, e - b));
}

inline std::optional<std::vector<double>> parse_list(const std::string& v)
{
    std::vector<double> out;
    for (auto part : io::split(v, ',')) {
        const auto x = io::parse_number(part);
        if (!x) {
            return std::nullopt;
        }
        out.push_back(*x);
    }
    return out;
}

inline std::optional<long> parse_integer(const std::string& v)
{
    const auto x = io::parse_number(v);
    if (!x || *x != static_cast<double>(static_cast<long>(*x))) {
        return std::nullopt;
    }
    return static_cast<long>(*x);
}

inline std::optional<bool> parse_bool(const std::string& v)
{
    if (v == "true" || v == "yes" || v == "1") {
        return true;
    }
    if (v == "false" || v == "no" || v == "0") {
        return false;
    }
    return std::nullopt;
}

} // namespace detail

struct Entry
{
    std::string value;
    int line = 0;
};

struct Section
{
    /// Full name including the index, e.g. "sequence.2".
    std::string name;
    /// Schema name, e.g. "sequence".
    std::string kind;
    int index = 0;
    int line = 0;
    std::map<std::string, Entry> entries;
};

class Config
{
public:
    static Config parse(std::istream& is, const std::string& source = "<config>")
    {
        Config c;
        c.m_source = source;
        c.m_sections.push_back({"", "", 0, 0, {}});
        std::string raw;
        int line_no = 0;
        auto fail = [&](const std::string& msg) -> void {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + msg, line_no);
        };
        while (std::getline(is, raw)) {
            ++line_no;
            std::string line = raw;
            const auto hash = line.find_first_of("#;");
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            line = detail::trim(line);
            if (line.empty()) {
                continue;
            }
            if (line.front() == '[') {
                if (line.back() != ']') {
                    fail("malformed section header '" + line + "'");
                }
                const std::string name = detail::trim(std::string_view(line).substr(1, line.size() - 2));
                Section sec{name, name, 0, line_no, {}};
                const auto dot = name.find('.');
                if (dot != std::string::npos) {
                    sec.kind = name.substr(0, dot);
                    const auto idx = detail::parse_integer(name.substr(dot + 1));
                    const SectionSpec* spec = find_section_spec(sec.kind);
                    if (!spec || !spec->indexed) {
                        fail("unknown section [" + name + "]");
                    }
                    if (!idx || *idx < 1) {
                        fail("section [" + name + "] needs a positive integer index");
                    }
                    sec.index = static_cast<int>(*idx);
                } else {
                    const SectionSpec* spec = find_section_spec(name);
                    if (!spec || name.empty()) {
                        fail("unknown section [" + name + "]");
                    }
                    if (spec->indexed) {
                        fail("section [" + name + "] must be written [" + name + ".N]");
                    }
                }
                for (const auto& s : c.m_sections) {
                    if (s.name == name && !name.empty()) {
                        fail("duplicate section [" + name + "] (first at line " + std::to_string(s.line) + ")");
                    }
                }
                c.m_sections.push_back(std::move(sec));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                fail("expected key = value, got '" + line + "'");
            }
            const std::string key = detail::trim(std::string_view(line).substr(0, eq));
            const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
            Section& sec = c.m_sections.back();
            const SectionSpec* spec = find_section_spec(sec.kind);
            const std::string where = sec.name.empty() ? "top level" : "[" + sec.name + "]";
            const KeySpec* ks = spec ? find_key_spec(*spec, key) : nullptr;
            if (key.empty()) {
                fail("empty key");
            }
            if (!ks) {
                fail("unknown key '" + key + "' in " + where);
            }
            if (value.empty()) {
                fail("key '" + key + "' in " + where + " has no value");
            }
            if (sec.entries.count(key)) {
                fail("duplicate key '" + key + "' in " + where + " (first at line " +
                     std::to_string(sec.entries[key].line) + ")");
            }
            const std::string type_error = check_value(*ks, value);
            if (!type_error.empty()) {
                fail("key '" + key + "' in " + where + ": " + type_error);
            }
            sec.entries[key] = {value, line_no};
        }
        if (!c.m_sections.front().entries.count("scenario")) {
            throw ConfigError(source + ": missing required top-level key 'scenario'", 0);
        }
        return c;
    }

    static Config load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file '" + path + "'");
        }
        return parse(in, path);
    }

    static Config from_string(const std::string& text, const std::string& source = "<string>")
    {
        std::istringstream is(text);
        return parse(is, source);
    }

    const std::string& source() const { return m_source; }
    std::string scenario() const { return text("", "scenario"); }

    bool has_section(const std::string& name) const { return find(name) != nullptr; }

    /// Indexed sections of a kind, in index order.
    std::vector<std::string> indexed_sections(const std::string& kind) const
    {
        std::vector<const Section*> v;
        for (const auto& s : m_sections) {
            if (s.kind == kind && s.index > 0) {
                v.push_back(&s);
            }
        }
        std::sort(v.begin(), v.end(), [](const Section* a, const Section* b) { return a->index < b->index; });
        std::vector<std::string> out;
        for (const auto* s : v) {
            out.push_back(s->name);
        }
        return out;
    }

    double number(const std::string& section, const std::string& key) const
    {
        return *io::parse_number(raw(section, key));
    }
    int integer(const std::string& section, const std::string& key) const
    {
        return static_cast<int>(*detail::parse_integer(raw(section, key)));
    }
    bool boolean(const std::string& section, const std::string& key) const
    {
        return *detail::parse_bool(raw(section, key));
    }
    std::string text(const std::string& section, const std::string& key) const { return raw(section, key); }
    std::vector<double> list(const std::string& section, const std::string& key) const
    {
        return *detail::parse_list(raw(section, key));
    }

    /// Line of an explicitly given key, 0 when defaulted.
    int line_of(const std::string& section, const std::string& key) const
    {
        const Section* s = find(section);
        if (!s) {
            return 0;
        }
        const auto it = s->entries.find(key);
        return it == s->entries.end() ? 0 : it->second.line;
    }

    /// A physics-level complaint about a given key, prefixed with its location.
    [[noreturn]] void reject(const std::string& section, const std::string& key, const std::string& msg) const
    {
        const int line = line_of(section, key);
        const std::string where = section.empty() ? key : "[" + section + "] " + key;
        throw ConfigError(m_source + ":" + std::to_string(line) + ": " + where + ": " + msg, line);
    }

    /// Every schema key of every non-indexed section plus present indexed
    /// sections, as (section.key, value, "default"|"set").
    std::vector<std::array<std::string, 3>> effective() const
    {
        std::vector<std::array<std::string, 3>> out;
        for (const auto& spec : schema()) {
            std::vector<std::string> names;
            if (spec.indexed) {
                names = indexed_sections(spec.name);
            } else {
                names.push_back(spec.name);
            }
            for (const auto& n : names) {
                for (const auto& k : spec.keys) {
                    const Section* s = find(n);
                    const bool set = s && s->entries.count(k.key);
                    const std::string v = set ? s->entries.at(k.key).value : k.default_value;
                    out.push_back({n.empty() ? k.key : n + "." + k.key, v, set ? "set" : "default"});
                }
            }
        }
        return out;
    }

private:
    static std::string check_value(const KeySpec& ks, const std::string& v)
    {
        switch (ks.kind) {
        case Kind::number:
            return io::parse_number(v) ? "" : "expected a number, got '" + v + "'";
        case Kind::integer:
            return detail::parse_integer(v) ? "" : "expected an integer, got '" + v + "'";
        case Kind::boolean:
            return detail::parse_bool(v) ? "" : "expected true or false, got '" + v + "'";
        case Kind::number_list:
            return detail::parse_list(v) ? "" : "expected a comma-separated number list, got '" + v + "'";
        case Kind::text:
            if (!ks.choices.empty() && std::find(ks.choices.begin(), ks.choices.end(), v) == ks.choices.end()) {
                std::string all;
                for (const auto& c : ks.choices) {
                    all += (all.empty() ? "" : ", ") + c;
                }
                return "value '" + v + "' not one of {" + all + "}";
            }
            return "";
        }
        return "";
    }

    const Section* find(const std::string& name) const
    {
        for (const auto& s : m_sections) {
            if (s.name == name) {
                return &s;
            }
        }
        return nullptr;
    }

    std::string raw(const std::string& section, const std::string& key) const
    {
        const Section* s = find(section);
        if (s) {
            const auto it = s->entries.find(key);
            if (it != s->entries.end()) {
                return it->second.value;
            }
        }
        const auto dot = section.find('.');
        const SectionSpec* spec = find_section_spec(dot == std::string::npos ? section : section.substr(0, dot));
        const KeySpec* ks = spec ? find_key_spec(*spec, key) : nullptr;
        if (!ks) {
            throw std::logic_error("config: key '" + key + "' not in schema section '" + section + "'");
        }
        return ks->default_value;
    }

    std::string m_source;
    std::vector<Section> m_sections;
};

} // namespace afcsim::config

// Field access for configuration documents. Every failure names the JSON
// pointer of the offending field.
#pragma once

#include "cdcm/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace cdcm::detail {

using nlohmann::json;

[[noreturn]] inline void invalid(const std::string& pointer, const std::string& message)
{
    throw Error(ErrorCode::Validation, (pointer.empty() ? std::string("/") : pointer) + ": " + message);
}

inline std::string escape_token(std::string_view key)
{
    std::string out;
    for (char c : key) {
        if (c == '~')
            out += "~0";
        else if (c == '/')
            out += "~1";
        else
            out += c;
    }
    return out;
}

class Fields {
public:
    Fields(const json& obj, std::string pointer) : m_obj(obj), m_ptr(std::move(pointer))
    {
        if (!obj.is_object())
            invalid(m_ptr, "expected an object");
    }

    const std::string& pointer() const { return m_ptr; }
    std::string at(std::string_view key) const { return m_ptr + "/" + escape_token(key); }
    bool has(std::string_view key) const { return m_obj.contains(std::string(key)); }

    const json& sub(std::string_view key) const
    {
        if (!has(key))
            invalid(at(key), "required field is missing");
        return m_obj.at(std::string(key));
    }
    const json* find(std::string_view key) const
    {
        auto it = m_obj.find(std::string(key));
        return it == m_obj.end() ? nullptr : &*it;
    }

    double number(std::string_view key) const { return as_number(sub(key), at(key)); }
    double number(std::string_view key, double def) const
    {
        const json* j = find(key);
        return j ? as_number(*j, at(key)) : def;
    }

    std::uint64_t count(std::string_view key) const { return as_count(sub(key), at(key)); }
    std::uint64_t count(std::string_view key, std::uint64_t def) const
    {
        const json* j = find(key);
        return j ? as_count(*j, at(key)) : def;
    }

    bool flag(std::string_view key, bool def) const
    {
        const json* j = find(key);
        if (!j)
            return def;
        if (!j->is_boolean())
            invalid(at(key), "expected true or false");
        return j->get<bool>();
    }

    std::string text(std::string_view key) const { return as_text(sub(key), at(key)); }
    std::string text(std::string_view key, std::string_view def) const
    {
        const json* j = find(key);
        return j ? as_text(*j, at(key)) : std::string(def);
    }

    /// Rejects keys outside `allowed` (catches misspelled fields).
    void only(std::initializer_list<std::string_view> allowed) const
    {
        for (auto it = m_obj.begin(); it != m_obj.end(); ++it) {
            bool ok = false;
            for (auto a : allowed)
                ok = ok || it.key() == a;
            if (!ok)
                invalid(at(it.key()), "unknown field");
        }
    }

    static double as_number(const json& j, const std::string& ptr)
    {
        if (!j.is_number())
            invalid(ptr, "expected a number");
        const double v = j.get<double>();
        if (!std::isfinite(v))
            invalid(ptr, "expected a finite number");
        return v;
    }

    static std::uint64_t as_count(const json& j, const std::string& ptr)
    {
        if (j.is_number_unsigned())
            return j.get<std::uint64_t>();
        if (j.is_number_float()) {
            const double v = j.get<double>();
            if (v >= 0.0 && v == std::floor(v) && v < 1.8e19)
                return static_cast<std::uint64_t>(v);
        }
        invalid(ptr, "expected a non-negative integer");
    }

    static std::string as_text(const json& j, const std::string& ptr)
    {
        if (!j.is_string())
            invalid(ptr, "expected a string");
        return j.get<std::string>();
    }

private:
    const json& m_obj;
    std::string m_ptr;
};

/// Parses text, reporting syntax errors by line and column.
inline json parse_document(std::string_view text, const std::string& origin)
{
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorCode::Validation, origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                               ": JSON syntax error");
    }
}

}  // namespace cdcm::detail

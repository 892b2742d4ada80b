#pragma once

// Stock graphs used across the test suites: the three demo-domain initial
// graphs (public health, traffic safety, travel mode choice) plus the
// refined public-health graph that the diff tests compare against.

#include <string>
#include <vector>

#include "scg.hpp"

namespace fixtures {

inline const char* kPandemicInitialScg = R"(Causal Statement 1: [Demographic Information] affects [Vaccination Coverage] and [Restriction Policy Response].
Older or vulnerable populations often have higher vaccination uptake and are more likely to be targeted by stricter restrictions.

Causal Statement 2: [Healthcare System Condition] affects [Vaccination Coverage] and [Population Immunity].
Regions with better healthcare access can distribute vaccines more effectively and maintain higher baseline immunity.

Causal Statement 3: [ICU and Hospital Staffing Condition] affects [Restriction Policy Response].
When ICU beds are full or staffing is limited, governments tend to implement stricter control policies.

Causal Statement 4: [Vaccination Coverage] affects [Population Immunity].
Higher vaccination coverage directly increases the proportion of immune individuals in the population.

Causal Statement 5: [Population Immunity] affects [Reported Cases per 100k] and [Hospitalization per 100k].
Stronger immunity reduces both the number of new infections and the chance of severe cases needing hospitalization.

Causal Statement 6: [Reported Cases per 100k] affects [Hospitalization per 100k] and [Restriction Policy Response].
A rise in reported cases usually precedes more hospital admissions and can trigger policy tightening.

Causal Statement 7: [Hospitalization per 100k] affects [Restriction Policy Response].
High hospitalization levels often lead to immediate government intervention to limit further spread.

Causal Statement 8: [Hospitalization per 100k] and [Restriction Policy Response] affect [Change of Hospitalization Next Week].
The trends of hospitalization in past weeks have strong relation with change of hospitalization next week.
)";

inline const char* kPandemicRefinedScg = R"(Causal Statement 1: [Demographic Information] affects [Vaccination Coverage].
Older or vulnerable populations often have higher vaccination uptake.

Causal Statement 2: [Healthcare System Condition] affects [Population Immunity].
Better healthcare systems maintain higher baseline immunity.

Causal Statement 3: [ICU and Hospital Staffing Condition] affects [Restriction Policy Response].
When ICU beds are full or staffing is limited, governments tend to implement stricter control policies.

Causal Statement 4: [Vaccination Coverage] affects [Population Immunity].
Higher vaccination coverage directly increases the proportion of immune individuals in the population.

Causal Statement 5: [Population Immunity] affects [Reported Cases per 100k].
Stronger immunity reduces the number of new infections.

Causal Statement 6: [Reported Cases per 100k] affects [Hospitalization per 100k].
A rise in reported cases usually precedes more hospital admissions.

Causal Statement 7: [Hospitalization per 100k] affects [Restriction Policy Response].
High hospitalization levels often lead to immediate government intervention to limit further spread.

Causal Statement 8: [Hospitalization per 100k] and [Restriction Policy Response] affect [Change of Hospitalization Next Week].
The trends of hospitalization in past weeks have strong relation with change of hospitalization next week.

Causal Statement 9: [Healthcare System Condition] affects [Hospitalization per 100k].
Poor healthcare system performance can lead to higher hospitalization rates due to inadequate prevention and treatment measures.
)";

inline std::vector<ego::NodeId> pandemic_candidates() {
    std::vector<ego::NodeId> nodes;
    for (const char* label :
         {"Demographic Information", "Healthcare System Condition",
          "ICU and Hospital Staffing Condition", "Vaccination Coverage", "Population Immunity",
          "Restriction Policy Response", "Hospitalization per 100k", "Reported Cases per 100k",
          "Change of Hospitalization Next Week"}) {
        nodes.push_back(ego::NodeId::make(label));
    }
    return nodes;
}

inline const char* kTrafficInitialScg = R"(Causal Statement 1: [Person Status] affects [Severity].
The driver's Blood Alcohol Content (BAC) significantly increases the probability of fatal crashes.

Causal Statement 2: [Position] affects [Severity].
Work zones can increase the probability of serious and fatal crashes. Driving in work zones after drinking is especially likely to cause severe or fatal crashes.

Causal Statement 3: [Driver Behavior] affects [Severity].
Aggressive driving and impairment-related behavior pose higher risk than other driver behaviors.
)";

inline std::vector<ego::NodeId> traffic_candidates() {
    std::vector<ego::NodeId> nodes;
    for (const char* label : {"Person Status", "Position", "Driver Behavior", "Severity"}) {
        nodes.push_back(ego::NodeId::make(label));
    }
    return nodes;
}

inline const char* kSwissmetroInitialScg = R"(Causal Statement 1: [Gender] and [Age] affect [Trip Purpose] and [Luggage].
Younger travelers are more likely to travel for education or leisure and carry luggage; older travelers more often travel for business with less luggage.

Causal Statement 2: [Income] affects [First Class], [Rail Pass], and [Trip_Paid_By].
High-income travelers are more likely to choose first class, own a rail pass, and pay for the trip themselves.

Causal Statement 3: [Trip Purpose] affects [Trip_Paid_By] and [Luggage].
Business trips are often employer-paid and involve less luggage; leisure trips are usually self-paid and involve more.

Causal Statement 4: [Origin and Destination] determine [Travel Options], [Travel Time], and [Headway].
Major city pairs offer more modes, shorter travel time, and higher frequency.

Causal Statement 5: [Trip Purpose] affects [Travel Mode Choice].
Business travelers tend to prefer faster, more reliable modes; leisure travelers may prioritize cost or flexibility.

Causal Statement 6: [First Class] affects [Travel Mode Choice].
Travelers choosing first class are more likely to select Train or Swissmetro over Car for comfort.

Causal Statement 7: [Rail Pass] affects [Travel Mode Choice].
Travelers with a rail pass are more likely to use Train or Swissmetro due to lower perceived cost.

Causal Statement 8: [Luggage] affects [Travel Mode Choice].
Travelers with heavy or bulky luggage may prefer Train or Car.

Causal Statement 9: [Trip_Paid_By] affects [Travel Mode Choice].
If the trip is employer-paid, travelers tend to choose faster or more comfortable modes like Swissmetro; if self-paid, they prefer cheaper options like standard Train or Car.

Causal Statement 10: [Travel Time] and [Headway] affect [Travel Mode Choice].
Business travelers are more sensitive to time and prefer faster and frequent modes; leisure travelers may tolerate longer travel time or wait if the mode is cheaper or more flexible.
)";

inline std::vector<ego::NodeId> swissmetro_candidates() {
    std::vector<ego::NodeId> nodes;
    for (const char* label :
         {"Gender", "Age", "Trip Purpose", "Luggage", "Income", "First Class", "Rail Pass",
          "Trip_Paid_By", "Origin and Destination", "Travel Options", "Travel Time", "Headway",
          "Travel Mode Choice"}) {
        nodes.push_back(ego::NodeId::make(label));
    }
    return nodes;
}

}  // namespace fixtures
